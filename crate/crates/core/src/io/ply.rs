use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use super::{read_text, write_text};
use crate::error::{Error, Result};
use crate::geometry::{PointCloud, TriangleMesh};

pub fn cloud_to_ply(cloud: &PointCloud) -> String {
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\ncomment units meters\n");
    let _ = writeln!(s, "element vertex {}", cloud.points.len());
    s.push_str("property double x\nproperty double y\nproperty double z\nend_header\n");
    for p in &cloud.points {
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    s
}

/// Vertices plus triangles; each face also carries its unit normal.
pub fn mesh_to_ply(mesh: &TriangleMesh) -> String {
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\ncomment units meters\n");
    let _ = writeln!(s, "element vertex {}", mesh.vertices().len());
    s.push_str("property double x\nproperty double y\nproperty double z\n");
    let _ = writeln!(s, "element face {}", mesh.triangles().len());
    s.push_str("property list uchar int vertex_indices\n");
    s.push_str("property double nx\nproperty double ny\nproperty double nz\nend_header\n");
    for p in mesh.vertices() {
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    for (t, n) in mesh.triangles().iter().zip(mesh.normals()) {
        let _ = writeln!(s, "3 {} {} {} {} {} {}", t[0], t[1], t[2], n.x, n.y, n.z);
    }
    s
}

struct Element {
    name: String,
    count: usize,
    /// Scalar property names; a list property is recorded as `None`.
    props: Vec<Option<String>>,
}

struct Ply {
    vertices: Vec<Vector3<f64>>,
    faces: Vec<[usize; 3]>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::parse("PLY", msg)
}

fn parse_ply(text: &str) -> Result<Ply> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(bad("missing `ply` magic"));
    }
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let line = lines
            .next()
            .ok_or_else(|| bad("header ends without end_header"))?
            .trim();
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["format", "ascii", _] => {}
            ["format", ..] => return Err(bad("only ASCII PLY is supported")),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| bad(format!("bad element count `{count}`")))?,
                props: Vec::new(),
            }),
            ["property", "list", _, _, _] => elements
                .last_mut()
                .ok_or_else(|| bad("property before any element"))?
                .props
                .push(None),
            ["property", _, name] => elements
                .last_mut()
                .ok_or_else(|| bad("property before any element"))?
                .props
                .push(Some(name.to_string())),
            ["end_header"] => break,
            _ => return Err(bad(format!("unrecognized header line `{line}`"))),
        }
    }
    let mut body = lines.filter(|l| !l.trim().is_empty());
    let mut out = Ply {
        vertices: Vec::new(),
        faces: Vec::new(),
    };
    for el in &elements {
        let pos = |n: &str| el.props.iter().position(|p| p.as_deref() == Some(n));
        for i in 0..el.count {
            let line = body
                .next()
                .ok_or_else(|| bad(format!("{} element {i} is missing", el.name)))?;
            let nums: Vec<&str> = line.split_whitespace().collect();
            match el.name.as_str() {
                "vertex" => {
                    let (Some(x), Some(y), Some(z)) = (pos("x"), pos("y"), pos("z")) else {
                        return Err(bad("vertex element needs x, y and z"));
                    };
                    if el.props.iter().any(Option::is_none) {
                        return Err(bad("list properties on vertices are not supported"));
                    }
                    let get = |k: usize| -> Result<f64> {
                        nums.get(k)
                            .ok_or_else(|| bad(format!("vertex {i} has too few values")))?
                            .parse()
                            .map_err(|_| bad(format!("vertex {i} has a non-numeric value")))
                    };
                    out.vertices.push(Vector3::new(get(x)?, get(y)?, get(z)?));
                }
                "face" => {
                    if el.props.first() != Some(&None) {
                        return Err(bad("face element must start with its index list"));
                    }
                    let idx: Vec<usize> = nums
                        .iter()
                        .skip(1)
                        .take(3)
                        .map(|s| {
                            s.parse()
                                .map_err(|_| bad(format!("face {i} has a bad index")))
                        })
                        .collect::<Result<_>>()?;
                    if nums.first() != Some(&"3") || idx.len() != 3 {
                        return Err(bad(format!("face {i} is not a triangle")));
                    }
                    out.faces.push([idx[0], idx[1], idx[2]]);
                }
                _ => {}
            }
        }
    }
    Ok(out)
}

pub fn cloud_from_ply(text: &str) -> Result<PointCloud> {
    let ply = parse_ply(text)?;
    if !ply.faces.is_empty() {
        return Err(bad("expected a point cloud, found faces"));
    }
    PointCloud::new(ply.vertices)
}

/// Face normals in the file are ignored; they are recomputed from the
/// winding order.
pub fn mesh_from_ply(text: &str) -> Result<TriangleMesh> {
    let ply = parse_ply(text)?;
    TriangleMesh::new(ply.vertices, ply.faces)
}

pub fn write_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    write_text(path, &cloud_to_ply(cloud))
}

pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    cloud_from_ply(&read_text(path)?)
}

pub fn write_mesh(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    write_text(path, &mesh_to_ply(mesh))
}

pub fn read_mesh(path: &Path) -> Result<TriangleMesh> {
    mesh_from_ply(&read_text(path)?)
}
