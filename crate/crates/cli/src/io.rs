//! File formats: event-stream CSV, configuration JSON, curve CSV.
//!
//! Event streams are `timestamp_ps,channel` lines. Comment lines starting
//! with `#` carry metadata:
//!
//! ```text
//! # config {"n_photons":2,...}
//! # segment phi=0.5 scan=0 trials=76926
//! ```
//!
//! The config line, when present, precedes every event. A segment line opens
//! a block of trials at the given phase set-point; `trials` is optional.

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;

use clusterloop_core::fit::CurvePoint;
use clusterloop_core::stream::{EventRecord, SegmentMarker, StreamItem};
use clusterloop_core::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn parse_err(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Parse { line, message: message.into() }
}

pub fn read_config(path: &Path) -> anyhow::Result<ExperimentConfig> {
    let text = fs::read_to_string(path)?;
    let config: ExperimentConfig = serde_json::from_str(&text)?;
    config.validate()?;
    Ok(config)
}

enum Line {
    Item(StreamItem),
    Config(ExperimentConfig),
    Skip,
}

fn parse_line(text: &str, line: usize) -> Result<Line, FormatError> {
    let text = text.trim();
    if text.is_empty() || text.starts_with("timestamp_ps") {
        return Ok(Line::Skip);
    }
    if let Some(comment) = text.strip_prefix('#') {
        let comment = comment.trim();
        if let Some(json) = comment.strip_prefix("config") {
            let config = serde_json::from_str(json.trim()).map_err(|e| parse_err(line, format!("config: {e}")))?;
            return Ok(Line::Config(config));
        }
        if let Some(fields) = comment.strip_prefix("segment") {
            return parse_segment(fields, line).map(|m| Line::Item(StreamItem::Marker(m)));
        }
        return Ok(Line::Skip);
    }
    let (t, c) = text.split_once(',').ok_or_else(|| parse_err(line, "expected `timestamp_ps,channel`"))?;
    let timestamp_ps = t.trim().parse().map_err(|e| parse_err(line, format!("timestamp: {e}")))?;
    let channel = c.trim().parse().map_err(|e| parse_err(line, format!("channel: {e}")))?;
    Ok(Line::Item(StreamItem::Event(EventRecord { timestamp_ps, channel })))
}

fn parse_segment(fields: &str, line: usize) -> Result<SegmentMarker, FormatError> {
    let mut phi = None;
    let mut scan = 0;
    let mut trials = None;
    for field in fields.split_whitespace() {
        let (key, value) = field.split_once('=').ok_or_else(|| parse_err(line, format!("bad field `{field}`")))?;
        let bad = |e: &dyn std::fmt::Display| parse_err(line, format!("{key}: {e}"));
        match key {
            "phi" => phi = Some(value.parse::<f64>().map_err(|e| bad(&e))?),
            "scan" => scan = value.parse().map_err(|e| bad(&e))?,
            "trials" => trials = Some(value.parse().map_err(|e| bad(&e))?),
            _ => {}
        }
    }
    let phi = phi.ok_or_else(|| parse_err(line, "segment without phi"))?;
    Ok(SegmentMarker { phi, scan, trials })
}

/// Lazy reader over an event stream. The leading config line, if any, is
/// consumed on construction.
pub struct StreamReader<R> {
    reader: R,
    line: usize,
    pending: Option<StreamItem>,
    buf: String,
}

impl<R: BufRead> StreamReader<R> {
    pub fn open(reader: R) -> Result<(Option<ExperimentConfig>, Self), FormatError> {
        let mut this = Self { reader, line: 0, pending: None, buf: String::new() };
        let mut config = None;
        while let Some(parsed) = this.next_line()? {
            match parsed {
                Line::Config(c) => config = Some(c),
                Line::Item(item) => {
                    this.pending = Some(item);
                    break;
                }
                Line::Skip => {}
            }
        }
        Ok((config, this))
    }

    fn next_line(&mut self) -> Result<Option<Line>, FormatError> {
        self.buf.clear();
        if self.reader.read_line(&mut self.buf)? == 0 {
            return Ok(None);
        }
        self.line += 1;
        parse_line(&self.buf, self.line).map(Some)
    }
}

impl<R: BufRead> Iterator for StreamReader<R> {
    type Item = Result<StreamItem, FormatError>;

    fn next(&mut self) -> Option<Self::Item> {
        if let Some(item) = self.pending.take() {
            return Some(Ok(item));
        }
        loop {
            match self.next_line() {
                Ok(Some(Line::Item(item))) => return Some(Ok(item)),
                Ok(Some(Line::Config(_))) => {
                    return Some(Err(parse_err(self.line, "config line after the first event")));
                }
                Ok(Some(Line::Skip)) => continue,
                Ok(None) => return None,
                Err(e) => return Some(Err(e)),
            }
        }
    }
}

pub fn write_stream<W: Write>(mut w: W, config: &ExperimentConfig, items: &[StreamItem]) -> io::Result<()> {
    writeln!(w, "# config {}", serde_json::to_string(config)?)?;
    writeln!(w, "timestamp_ps,channel")?;
    for item in items {
        match item {
            StreamItem::Event(e) => writeln!(w, "{},{}", e.timestamp_ps, e.channel)?,
            StreamItem::Marker(m) => match m.trials {
                Some(t) => writeln!(w, "# segment phi={} scan={} trials={t}", m.phi, m.scan)?,
                None => writeln!(w, "# segment phi={} scan={}", m.phi, m.scan)?,
            },
        }
    }
    w.flush()
}

/// Phases are written in radians unless `degrees` is set.
pub fn write_curve_csv<W: Write>(mut w: W, points: &[CurvePoint], degrees: bool) -> io::Result<()> {
    writeln!(w, "{},mean,stderr,counts", if degrees { "phi_deg" } else { "phi_rad" })?;
    for p in points {
        let phi = if degrees { p.phi.to_degrees() } else { p.phi };
        writeln!(w, "{phi},{},{},{}", p.mean, p.stderr, p.counts)?;
    }
    Ok(())
}
