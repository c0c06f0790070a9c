//! Line-oriented run trace and the metrics derived from it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::vehicle::Mode;

pub const TRACE_HEADER: &str = "t,kind,id,x,y,heading,speed,mode,energy_Wh,est_x,est_y,est_err_m,info";

/// Per-step sample of one AGV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgvSample {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub mode: Mode,
    pub energy_wh: f64,
    pub est_x: f64,
    pub est_y: f64,
    pub est_err_m: f64,
    pub odometer_m: f64,
    pub pulses: [i64; 4],
    pub drain_wh: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    lines: Vec<String>,
}

/// Parsed trace row. Event rows carry no sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub kind: String,
    pub id: u64,
    pub sample: Option<AgvSample>,
    pub info: String,
}

impl TraceRow {
    /// Value of `key=` in the info field.
    pub fn info_value(&self, key: &str) -> Option<&str> {
        self.info.split(';').find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
    }

    pub fn info_f64(&self, key: &str) -> Option<f64> {
        self.info_value(key).and_then(|v| v.parse().ok())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("trace line {line}: {reason}")]
pub struct TraceError {
    pub line: usize,
    pub reason: String,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_sample(&mut self, t: f64, id: u32, s: &AgvSample) {
        self.lines.push(format!(
            "{t:.6},agv,{id},{:.4},{:.4},{:.5},{:.4},{},{:.6},{:.4},{:.4},{:.4},odo={:.6};p={}:{}:{}:{};drain={:.6}",
            s.x,
            s.y,
            s.heading,
            s.speed,
            s.mode.label(),
            s.energy_wh,
            s.est_x,
            s.est_y,
            s.est_err_m,
            s.odometer_m,
            s.pulses[0],
            s.pulses[1],
            s.pulses[2],
            s.pulses[3],
            s.drain_wh,
        ));
    }

    /// Event row; commas in `info` are replaced so the row stays parseable.
    pub fn push_event(&mut self, t: f64, kind: &str, id: u64, info: &str) {
        self.lines.push(format!("{t:.6},{kind},{id},,,,,,,,,,{}", info.replace(',', ";")));
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.lines.iter().map(|l| l.len() + 1).sum::<usize>() + TRACE_HEADER.len() + 1);
        out.push_str(TRACE_HEADER);
        out.push('\n');
        for l in &self.lines {
            out.push_str(l);
            out.push('\n');
        }
        out
    }

    /// Hex SHA-256 of the CSV text.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_csv().as_bytes()))
    }

    pub fn from_csv(text: &str) -> Result<Self, TraceError> {
        let mut it = text.lines();
        match it.next() {
            Some(h) if h.trim_end() == TRACE_HEADER => {}
            _ => return Err(TraceError { line: 1, reason: "missing header".into() }),
        }
        let lines: Vec<String> = it.filter(|l| !l.trim().is_empty()).map(str::to_string).collect();
        let trace = Self { lines };
        trace.rows()?;
        Ok(trace)
    }

    pub fn rows(&self) -> Result<Vec<TraceRow>, TraceError> {
        self.lines.iter().enumerate().map(|(i, l)| parse_row(l).map_err(|reason| TraceError { line: i + 2, reason })).collect()
    }
}

fn parse_row(line: &str) -> Result<TraceRow, String> {
    let f: Vec<&str> = line.splitn(13, ',').collect();
    if f.len() != 13 {
        return Err(format!("expected 13 fields, got {}", f.len()));
    }
    let num = |i: usize| f[i].parse::<f64>().map_err(|_| format!("bad number in column {}", i + 1));
    let t = num(0)?;
    let id = f[2].parse::<u64>().map_err(|_| "bad id".to_string())?;
    let info = f[12].to_string();
    let sample = if f[1] == "agv" {
        let mode = [Mode::Standby, Mode::MoveToTarget, Mode::Loading, Mode::Unloading]
            .into_iter()
            .find(|m| m.label() == f[7])
            .ok_or("bad mode")?;
        let row = TraceRow { t, kind: String::new(), id, sample: None, info: info.clone() };
        let pulses: Vec<i64> = row
            .info_value("p")
            .ok_or("missing pulses")?
            .split(':')
            .map(|p| p.parse::<i64>().map_err(|_| "bad pulse count".to_string()))
            .collect::<Result<_, _>>()?;
        Some(AgvSample {
            x: num(3)?,
            y: num(4)?,
            heading: num(5)?,
            speed: num(6)?,
            mode,
            energy_wh: num(8)?,
            est_x: num(9)?,
            est_y: num(10)?,
            est_err_m: num(11)?,
            odometer_m: row.info_f64("odo").ok_or("missing odo")?,
            pulses: pulses.try_into().map_err(|_| "expected four pulse counts")?,
            drain_wh: row.info_f64("drain").ok_or("missing drain")?,
        })
    } else {
        None
    };
    Ok(TraceRow { t, kind: f[1].to_string(), id, sample, info })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub jobs_completed: usize,
    pub jobs_failed: usize,
    /// First release to last completion.
    pub makespan_s: f64,
    /// Containers per hour.
    pub throughput_per_h: f64,
    pub total_distance_m: f64,
    pub total_energy_wh: f64,
    /// Release to start of loading, averaged over loaded jobs.
    pub mean_job_wait_s: f64,
    pub collision_count: usize,
    /// Actual dropoff arrival minus the empty-terminal arrival, per priority job.
    pub priority_delay_s: Vec<(u64, f64)>,
    pub late_commands: usize,
}

impl Metrics {
    pub fn summary(&self) -> String {
        let mut s = format!(
            "jobs completed   {}\njobs failed      {}\nmakespan         {:.1} s\nthroughput       {:.2} containers/h\ndistance         {:.1} m\nenergy           {:.3} kWh\nmean job wait    {:.1} s\ncollisions       {}\nlate commands    {}\n",
            self.jobs_completed,
            self.jobs_failed,
            self.makespan_s,
            self.throughput_per_h,
            self.total_distance_m,
            self.total_energy_wh / 1000.0,
            self.mean_job_wait_s,
            self.collision_count,
            self.late_commands,
        );
        for (job, d) in &self.priority_delay_s {
            s.push_str(&format!("priority job {job} delay {d:.2} s\n"));
        }
        s
    }
}

pub fn compute_metrics(trace: &Trace) -> Result<Metrics, TraceError> {
    let rows = trace.rows()?;
    let mut m = Metrics::default();
    let mut release: BTreeMap<u64, f64> = BTreeMap::new();
    let mut free_flight: BTreeMap<u64, f64> = BTreeMap::new();
    let mut last: BTreeMap<u64, AgvSample> = BTreeMap::new();
    let mut waits = Vec::new();
    let mut last_done = f64::NEG_INFINITY;
    for r in &rows {
        match r.kind.as_str() {
            "agv" => {
                last.insert(r.id, r.sample.expect("agv rows carry samples"));
            }
            "release" => {
                release.insert(r.id, r.t);
            }
            "assigned" if r.info_value("priority") == Some("1") => {
                if let Some(ff) = r.info_f64("ff") {
                    free_flight.insert(r.id, ff);
                }
            }
            "load_start" => {
                if let Some(rt) = release.get(&r.id) {
                    waits.push(r.t - rt);
                }
            }
            "unload_start" => {
                if let Some(ff) = free_flight.remove(&r.id) {
                    m.priority_delay_s.push((r.id, r.t - ff));
                }
            }
            "job_done" => {
                m.jobs_completed += 1;
                last_done = last_done.max(r.t);
            }
            "job_failed" => m.jobs_failed += 1,
            "collision" => m.collision_count += 1,
            "late_command" => m.late_commands += 1,
            _ => {}
        }
    }
    if m.jobs_completed > 0 {
        let first = release.values().copied().fold(f64::INFINITY, f64::min);
        m.makespan_s = last_done - first;
        if m.makespan_s > 0.0 {
            m.throughput_per_h = m.jobs_completed as f64 / m.makespan_s * 3600.0;
        }
    }
    m.total_distance_m = last.values().map(|s| s.odometer_m).sum();
    m.total_energy_wh = last.values().map(|s| s.energy_wh).sum();
    if !waits.is_empty() {
        m.mean_job_wait_s = waits.iter().sum::<f64>() / waits.len() as f64;
    }
    Ok(m)
}
