use crate::error::{Error, Result};

pub const DEFAULT_DENOISE_RADIUS: u32 = 1;
pub const DEFAULT_DENOISE_WINDOW: f64 = 0.005;

/// One asynchronous event: time (s), pixel, polarity (+1 / -1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub t: f64,
    pub x: u32,
    pub y: u32,
    pub polarity: i8,
}

impl Event {
    pub fn new(t: f64, x: u32, y: u32, polarity: i8) -> Result<Self> {
        if polarity != 1 && polarity != -1 {
            return Err(Error::validation(format!(
                "polarity must be +1 or -1, got {polarity}"
            )));
        }
        if !t.is_finite() {
            return Err(Error::validation("event time must be finite"));
        }
        Ok(Self { t, x, y, polarity })
    }
}

/// Time-ordered events from a `width` x `height` sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    pub width: u32,
    pub height: u32,
    pub events: Vec<Event>,
}

impl EventStream {
    pub fn new(width: u32, height: u32, events: Vec<Event>) -> Result<Self> {
        if let Some(i) = events.iter().position(|e| e.x >= width || e.y >= height) {
            return Err(Error::validation(format!(
                "event {i} lies outside the {width}x{height} sensor"
            )));
        }
        if let Some(i) = events.windows(2).position(|w| w[1].t < w[0].t) {
            return Err(Error::validation(format!(
                "event {} is out of time order",
                i + 1
            )));
        }
        if events.iter().any(|e| e.polarity != 1 && e.polarity != -1) {
            return Err(Error::validation("event polarity must be +1 or -1"));
        }
        Ok(Self {
            width,
            height,
            events,
        })
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Events with `start < t <= end`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventFrame {
    pub start: f64,
    pub end: f64,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FramedEvents {
    pub frames: Vec<EventFrame>,
    /// Events at or before the first boundary or after the last one.
    pub dropped: usize,
}

/// Splits a time-ordered stream into right-closed frames
/// `(boundary[i-1], boundary[i]]`.
pub fn frame_events(stream: &[Event], boundaries: &[f64]) -> Result<FramedEvents> {
    if boundaries.len() < 2 {
        return Err(Error::validation("need at least two frame boundaries"));
    }
    if boundaries.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::validation("frame boundaries must increase strictly"));
    }
    if let Some(i) = stream.windows(2).position(|w| !(w[1].t >= w[0].t)) {
        return Err(Error::validation(format!(
            "event {} is out of time order",
            i + 1
        )));
    }
    let mut frames: Vec<EventFrame> = boundaries
        .windows(2)
        .map(|w| EventFrame {
            start: w[0],
            end: w[1],
            events: Vec::new(),
        })
        .collect();
    let mut dropped = 0;
    let mut k = 0;
    for e in stream {
        if e.t <= boundaries[0] || e.t > boundaries[boundaries.len() - 1] {
            dropped += 1;
            continue;
        }
        while e.t > frames[k].end {
            k += 1;
        }
        frames[k].events.push(*e);
    }
    Ok(FramedEvents { frames, dropped })
}

/// Keeps an event iff some other event in the frame lies within
/// `spatial_radius` pixels (Chebyshev) and `time_window` seconds.
pub fn denoise_events(frame: &EventFrame, spatial_radius: u32, time_window: f64) -> EventFrame {
    let ev = &frame.events;
    let near = |a: &Event, b: &Event| {
        a.x.abs_diff(b.x) <= spatial_radius
            && a.y.abs_diff(b.y) <= spatial_radius
            && (a.t - b.t).abs() <= time_window
    };
    let kept = ev
        .iter()
        .enumerate()
        .filter(|(i, e)| {
            // events are time-ordered, so scan outwards until the window closes
            let back = ev[..*i]
                .iter()
                .rev()
                .take_while(|o| e.t - o.t <= time_window)
                .any(|o| near(e, o));
            back || ev[i + 1..]
                .iter()
                .take_while(|o| o.t - e.t <= time_window)
                .any(|o| near(e, o))
        })
        .map(|(_, e)| *e)
        .collect();
    EventFrame {
        start: frame.start,
        end: frame.end,
        events: kept,
    }
}

/// Signed per-pixel polarity sum, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<i32>,
}

impl EventImage {
    pub fn get(&self, x: u32, y: u32) -> i32 {
        self.data[(y * self.width + x) as usize]
    }
}

pub fn accumulate_event_image(frame: &EventFrame, width: u32, height: u32) -> Result<EventImage> {
    let mut data = vec![0i32; width as usize * height as usize];
    for (i, e) in frame.events.iter().enumerate() {
        if e.x >= width || e.y >= height {
            return Err(Error::validation(format!(
                "event {i} at ({}, {}) is outside the {width}x{height} image",
                e.x, e.y
            )));
        }
        data[(e.y * width + e.x) as usize] += e.polarity as i32;
    }
    Ok(EventImage {
        width,
        height,
        data,
    })
}
