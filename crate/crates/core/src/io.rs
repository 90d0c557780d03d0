//! `events.txt` streams: one `t x y p` line per event, `t` in decimal seconds,
//! `p` in {0, 1}.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::event::{Event, Polarity, Timestamp};

/// Lazily parses events from a reader, preserving input order.
pub struct EventReader<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
}

impl<R: BufRead> EventReader<R> {
    pub fn new(reader: R) -> Self {
        EventReader {
            lines: reader.lines(),
            line_no: 0,
        }
    }
}

impl<R: BufRead> Iterator for EventReader<R> {
    type Item = Result<Event>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = self.lines.next()?;
            self.line_no += 1;
            let line = match line {
                Ok(l) => l,
                Err(e) => {
                    return Some(Err(Error::Parse {
                        line: self.line_no,
                        msg: e.to_string(),
                    }))
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            return Some(parse_line(&line).map_err(|msg| Error::Parse {
                line: self.line_no,
                msg,
            }));
        }
    }
}

fn parse_line(line: &str) -> std::result::Result<Event, String> {
    let mut it = line.split_ascii_whitespace();
    let mut field = |name: &str| it.next().ok_or_else(|| format!("missing field `{name}`"));
    let t = field("t")?;
    let x = field("x")?;
    let y = field("y")?;
    let p = field("p")?;
    if it.next().is_some() {
        return Err("trailing fields".into());
    }
    let t = seconds_to_micros(t)?;
    let x: u16 = x.parse().map_err(|_| format!("bad x `{x}`"))?;
    let y: u16 = y.parse().map_err(|_| format!("bad y `{y}`"))?;
    let p = p
        .parse::<u8>()
        .ok()
        .and_then(Polarity::from_bit)
        .ok_or_else(|| format!("bad polarity `{p}`"))?;
    Ok(Event::new(t, x, y, p))
}

fn seconds_to_micros(s: &str) -> std::result::Result<Timestamp, String> {
    let secs: f64 = s.parse().map_err(|_| format!("bad timestamp `{s}`"))?;
    if !secs.is_finite() || secs < 0.0 {
        return Err(format!("bad timestamp `{s}`"));
    }
    Ok((secs * 1e6).round() as Timestamp)
}

/// Formats microseconds as seconds with six decimals, without going through floats.
pub fn format_seconds(t: Timestamp) -> String {
    format!("{}.{:06}", t / 1_000_000, t % 1_000_000)
}

pub fn read_events<R: BufRead>(reader: R) -> Result<Vec<Event>> {
    EventReader::new(reader).collect()
}

pub fn read_events_file(path: impl AsRef<Path>) -> Result<Vec<Event>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_events(BufReader::new(f))
}

pub fn write_events<W: Write>(mut w: W, events: &[Event]) -> std::io::Result<()> {
    for e in events {
        writeln!(w, "{} {} {} {}", format_seconds(e.t), e.x, e.y, e.p.bit())?;
    }
    w.flush()
}

pub fn write_events_file(path: impl AsRef<Path>, events: &[Event]) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_events(BufWriter::new(f), events).map_err(|e| Error::io(path, e))
}
