//! Supervisor/vehicle messages, their wire format, and a lossy fixed-latency
//! channel.
//!
//! Frame: `[version = 1][body length: u32 LE][body]`. All integers and
//! floats in the body are little-endian.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::navigation::PoseEstimate;
use crate::powertrain::ContainerClass;
use crate::rng::{keyed_rng, Stream};
use crate::supervisor::geometry::{PathGeometry, Segment, SegmentKind};
use crate::supervisor::profile::{Profile, ProfileItem};
use crate::supervisor::trajectory::service_indices;
use crate::supervisor::{Pose, Stop, StopAction, Trajectory};
use crate::terminal_map::Cell;
use crate::vehicle::Mode;

pub const WIRE_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Endpoint {
    Supervisor,
    Vehicle(u32),
}

impl Endpoint {
    fn key(self) -> u64 {
        match self {
            Endpoint::Supervisor => 0,
            Endpoint::Vehicle(id) => 1 + u64::from(id),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatusReport {
    pub t: f64,
    pub estimate: PoseEstimate,
    pub mode: Mode,
    pub speed: f64,
    pub battery_wh: f64,
    pub path_progress: f64,
    /// Revision of the trajectory being followed, if any.
    pub revision: Option<u32>,
    pub completed_revision: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Command { mode: Mode, cargo: Option<ContainerClass>, trajectory: Option<Trajectory> },
    Status(StatusReport),
    Ack { seq: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub seq: u64,
    pub sender: Endpoint,
    pub recipient: Endpoint,
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CommsError {
    #[error("malformed frame: {0}")]
    MalformedFrame(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelModel {
    pub latency: f64,
    pub loss_rate: f64,
    pub seed: u64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self { latency: 0.05, loss_rate: 0.0, seed: 0 }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Channel {
    pub model: ChannelModel,
    queue: Vec<(f64, Message)>,
    pub sent: u64,
    pub dropped: u64,
    /// When set, every frame handed to `send` is appended with its send time.
    pub frame_log: Option<Vec<(f64, Vec<u8>)>>,
}

impl Channel {
    pub fn new(model: ChannelModel) -> Self {
        Self { model, ..Self::default() }
    }

    /// Whether the message with this sender and sequence number is lost.
    pub fn is_lost(&self, sender: Endpoint, seq: u64) -> bool {
        if self.model.loss_rate <= 0.0 {
            return false;
        }
        let mut rng = keyed_rng(self.model.seed, Stream::ChannelLoss, &[sender.key(), seq]);
        rng.gen::<f64>() < self.model.loss_rate
    }

    pub fn send(&mut self, msg: Message, now: f64) {
        self.sent += 1;
        if let Some(log) = &mut self.frame_log {
            log.push((now, encode(&msg)));
        }
        if self.is_lost(msg.sender, msg.seq) {
            self.dropped += 1;
            return;
        }
        self.queue.push((now + self.model.latency, msg));
    }

    /// Removes and returns everything for `receiver` due by `now`, ordered
    /// by delivery time, then sequence number, then sender.
    pub fn poll(&mut self, receiver: Endpoint, now: f64) -> Vec<Message> {
        let mut due = Vec::new();
        let mut keep = Vec::with_capacity(self.queue.len());
        for (t, m) in self.queue.drain(..) {
            if m.recipient == receiver && t <= now + 1e-9 {
                due.push((t, m));
            } else {
                keep.push((t, m));
            }
        }
        self.queue = keep;
        due.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.seq.cmp(&b.1.seq)).then(a.1.sender.cmp(&b.1.sender)));
        due.into_iter().map(|(_, m)| m).collect()
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }
}

// ---- encoding ----

struct W(Vec<u8>);

impl W {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn endpoint(&mut self, e: Endpoint) {
        match e {
            Endpoint::Supervisor => {
                self.u8(0);
                self.u32(0);
            }
            Endpoint::Vehicle(id) => {
                self.u8(1);
                self.u32(id);
            }
        }
    }
    fn opt_u64(&mut self, v: Option<u64>) {
        self.u8(u8::from(v.is_some()));
        self.u64(v.unwrap_or(0));
    }
    fn opt_u32(&mut self, v: Option<u32>) {
        self.u8(u8::from(v.is_some()));
        self.u32(v.unwrap_or(0));
    }
    fn trajectory(&mut self, t: &Trajectory) {
        self.u32(t.agv);
        self.opt_u64(t.job);
        self.u32(t.revision);
        self.u8(u8::from(t.priority));
        self.u32(t.grid_rows);
        self.f64(t.cell_size());
        self.u32(t.path.len() as u32);
        for c in &t.path {
            self.u32(c.row);
            self.u32(c.col);
        }
        for s in &t.segments {
            self.f64(s.length_m);
            self.u8(s.kind.code());
            self.f64(s.v_limit);
        }
        self.u32(t.stops.len() as u32);
        for s in &t.stops {
            self.u32(s.path_index as u32);
            self.f64(s.dwell_s);
            self.u8(s.action.code());
        }
        self.u32(t.profile.items.len() as u32);
        for it in &t.profile.items {
            match *it {
                ProfileItem::Ramp { t0, s0, s1, v0, v1 } => {
                    self.u8(0);
                    for v in [t0, s0, s1, v0, v1] {
                        self.f64(v);
                    }
                }
                ProfileItem::Hold { t0, t1, s } => {
                    self.u8(1);
                    for v in [t0, t1, s] {
                        self.f64(v);
                    }
                }
            }
        }
    }
}

pub fn encode(msg: &Message) -> Vec<u8> {
    let mut w = W(Vec::new());
    w.endpoint(msg.sender);
    w.endpoint(msg.recipient);
    w.u64(msg.seq);
    match &msg.payload {
        Payload::Command { mode, cargo, trajectory } => {
            w.u8(0);
            w.u8(mode.code());
            w.u8(cargo.map_or(0xFF, |c| c.code()));
            match trajectory {
                Some(t) => {
                    w.u8(1);
                    w.trajectory(t);
                }
                None => w.u8(0),
            }
        }
        Payload::Status(s) => {
            w.u8(1);
            w.f64(s.t);
            for v in [s.estimate.pose.x, s.estimate.pose.y, s.estimate.pose.heading, s.estimate.sigma_xy, s.estimate.sigma_heading] {
                w.f64(v);
            }
            w.u8(s.mode.code());
            w.f64(s.speed);
            w.f64(s.battery_wh);
            w.f64(s.path_progress);
            w.opt_u32(s.revision);
            w.opt_u32(s.completed_revision);
        }
        Payload::Ack { seq } => {
            w.u8(2);
            w.u64(*seq);
        }
    }
    let body = w.0;
    let mut out = Vec::with_capacity(body.len() + 5);
    out.push(WIRE_VERSION);
    out.extend_from_slice(&(body.len() as u32).to_le_bytes());
    out.extend_from_slice(&body);
    out
}

struct R<'a> {
    b: &'a [u8],
    at: usize,
}

fn bad(what: &str) -> CommsError {
    CommsError::MalformedFrame(what.to_string())
}

impl<'a> R<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CommsError> {
        if self.b.len() - self.at < n {
            return Err(bad("truncated body"));
        }
        let s = &self.b[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }
    fn left(&self) -> usize {
        self.b.len() - self.at
    }
    fn u8(&mut self) -> Result<u8, CommsError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, CommsError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, CommsError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, CommsError> {
        let v = f64::from_le_bytes(self.take(8)?.try_into().unwrap());
        if v.is_nan() {
            return Err(bad("NaN field"));
        }
        Ok(v)
    }
    fn flag(&mut self) -> Result<bool, CommsError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(bad("bad flag")),
        }
    }
    fn endpoint(&mut self) -> Result<Endpoint, CommsError> {
        let tag = self.u8()?;
        let id = self.u32()?;
        match (tag, id) {
            (0, 0) => Ok(Endpoint::Supervisor),
            (1, id) => Ok(Endpoint::Vehicle(id)),
            _ => Err(bad("bad endpoint")),
        }
    }
    fn opt_u64(&mut self) -> Result<Option<u64>, CommsError> {
        let f = self.flag()?;
        let v = self.u64()?;
        Ok(f.then_some(v))
    }
    fn opt_u32(&mut self) -> Result<Option<u32>, CommsError> {
        let f = self.flag()?;
        let v = self.u32()?;
        Ok(f.then_some(v))
    }
    fn count(&mut self, record: usize) -> Result<usize, CommsError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(record) > self.left() {
            return Err(bad("count exceeds frame"));
        }
        Ok(n)
    }
    fn trajectory(&mut self) -> Result<Trajectory, CommsError> {
        let agv = self.u32()?;
        let job = self.opt_u64()?;
        let revision = self.u32()?;
        let priority = self.flag()?;
        let grid_rows = self.u32()?;
        let cell_size = self.f64()?;
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(bad("cell size"));
        }
        let n = self.count(8 + 17)?;
        if n == 0 {
            return Err(bad("empty path"));
        }
        let mut path = Vec::with_capacity(n);
        for _ in 0..n {
            let c = Cell::new(self.u32()?, self.u32()?);
            if c.row >= grid_rows {
                return Err(bad("cell outside grid"));
            }
            if let Some(&p) = path.last() {
                if Cell::direction_to(p, c).is_none() {
                    return Err(bad("path cells not adjacent"));
                }
            }
            path.push(c);
        }
        let mut segments = Vec::with_capacity(n);
        for _ in 0..n {
            let length_m = self.f64()?;
            let kind = SegmentKind::from_code(self.u8()?).ok_or_else(|| bad("segment kind"))?;
            let v_limit = self.f64()?;
            if !(length_m.is_finite() && length_m >= 0.0 && v_limit.is_finite() && v_limit > 0.0) {
                return Err(bad("segment values"));
            }
            segments.push(Segment { length_m, kind, v_limit });
        }
        let ns = self.count(13)?;
        let mut stops = Vec::with_capacity(ns);
        for _ in 0..ns {
            let path_index = self.u32()? as usize;
            let dwell_s = self.f64()?;
            let action = StopAction::from_code(self.u8()?).ok_or_else(|| bad("stop action"))?;
            if path_index >= n || !(dwell_s.is_finite() && dwell_s >= 0.0) {
                return Err(bad("stop values"));
            }
            stops.push(Stop { path_index, dwell_s, action });
        }
        let ni = self.count(25)?;
        let mut items = Vec::with_capacity(ni);
        for _ in 0..ni {
            let it = match self.u8()? {
                0 => ProfileItem::Ramp { t0: self.f64()?, s0: self.f64()?, s1: self.f64()?, v0: self.f64()?, v1: self.f64()? },
                1 => ProfileItem::Hold { t0: self.f64()?, t1: self.f64()?, s: self.f64()? },
                _ => return Err(bad("profile item tag")),
            };
            items.push(it);
        }
        // Geometry is rebuilt from the path; reject anything that would not
        // describe a drivable path.
        let svc = service_indices(&stops, n);
        let g = PathGeometry::new(&path, &segments, cell_size, grid_rows, &svc);
        if !g.total_length().is_finite() {
            return Err(bad("path length"));
        }
        let mut t = Trajectory::new(agv, job, priority, path, segments, stops, Profile::new(items), cell_size, grid_rows);
        t.revision = revision;
        Ok(t)
    }
}

pub fn decode(bytes: &[u8]) -> Result<Message, CommsError> {
    if bytes.len() < 5 {
        return Err(bad("short header"));
    }
    if bytes[0] != WIRE_VERSION {
        return Err(bad("unknown version"));
    }
    let len = u32::from_le_bytes(bytes[1..5].try_into().unwrap()) as usize;
    if bytes.len() - 5 != len {
        return Err(bad("length mismatch"));
    }
    let mut r = R { b: &bytes[5..], at: 0 };
    let sender = r.endpoint()?;
    let recipient = r.endpoint()?;
    let seq = r.u64()?;
    let payload = match r.u8()? {
        0 => {
            let mode = Mode::from_code(r.u8()?).ok_or_else(|| bad("mode"))?;
            let cargo = match r.u8()? {
                0xFF => None,
                c => Some(ContainerClass::from_code(c).ok_or_else(|| bad("container"))?),
            };
            let trajectory = if r.flag()? { Some(r.trajectory()?) } else { None };
            Payload::Command { mode, cargo, trajectory }
        }
        1 => {
            let t = r.f64()?;
            let (x, y, h, sxy, sh) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?, r.f64()?);
            let mode = Mode::from_code(r.u8()?).ok_or_else(|| bad("mode"))?;
            let speed = r.f64()?;
            let battery_wh = r.f64()?;
            let path_progress = r.f64()?;
            let revision = r.opt_u32()?;
            let completed_revision = r.opt_u32()?;
            Payload::Status(StatusReport {
                t,
                estimate: PoseEstimate { pose: Pose { x, y, heading: h }, sigma_xy: sxy, sigma_heading: sh },
                mode,
                speed,
                battery_wh,
                path_progress,
                revision,
                completed_revision,
            })
        }
        2 => Payload::Ack { seq: r.u64()? },
        _ => return Err(bad("payload tag")),
    };
    if r.left() != 0 {
        return Err(bad("trailing bytes"));
    }
    let ok = match (&payload, sender, recipient) {
        (Payload::Command { .. }, Endpoint::Supervisor, Endpoint::Vehicle(_)) => true,
        (Payload::Status(_), Endpoint::Vehicle(_), Endpoint::Supervisor) => true,
        (Payload::Ack { .. }, a, b) => a != b,
        _ => false,
    };
    if !ok {
        return Err(bad("payload not allowed between these endpoints"));
    }
    Ok(Message { seq, sender, recipient, payload })
}
