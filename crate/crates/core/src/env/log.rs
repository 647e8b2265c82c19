//! Append-only frame event log.
//!
//! One tab-separated line per frame, after a version line and a header:
//!
//! ```text
//! # gfsim frame-log v1
//! frame	actions	decodes	bb_successes	block_frames	terminations
//! 17	1,0,3	0@0,2@1	8	-	0:D:4:1,2:X:53:12
//! ```
//!
//! * `actions`: repetition degree per IoT user, comma separated.
//! * `decodes`: `user@slot` for each IoT packet recovered, slot 0-based.
//! * `block_frames`: `F(K)` when a broadband block completed, else `-`.
//! * `terminations`: `user:D|X:latency:repetitions`, `D` delivered, `X`
//!   dropped.
//!
//! Empty lists are written as `-`.

use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use thiserror::Error;

use super::{FrameFate, FrameResult};

pub const FRAME_LOG_HEADER: &str =
    "# gfsim frame-log v1\nframe\tactions\tdecodes\tbb_successes\tblock_frames\tterminations";

#[derive(Debug, Error)]
pub enum LogParseError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Termination {
    pub user: u32,
    pub delivered: bool,
    pub latency: u32,
    pub repetitions: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FrameRecord {
    pub frame: u64,
    pub actions: Vec<u32>,
    pub decodes: Vec<(u32, u32)>,
    pub broadband_successes: u32,
    pub block_frames: Option<u32>,
    pub terminations: Vec<Termination>,
}

impl FrameRecord {
    pub fn from_result(r: &FrameResult) -> Self {
        let mut rec = FrameRecord {
            frame: r.frame,
            actions: r.users.iter().map(|u| u.degree).collect(),
            broadband_successes: r.broadband_successes,
            block_frames: r.block_frames,
            ..Default::default()
        };
        for (u, uf) in r.users.iter().enumerate() {
            if let Some(slot) = uf.decoded_slot {
                rec.decodes.push((u as u32, slot as u32));
            }
            match uf.fate {
                Some(FrameFate::Delivered {
                    latency,
                    repetitions,
                }) => rec.terminations.push(Termination {
                    user: u as u32,
                    delivered: true,
                    latency,
                    repetitions,
                }),
                Some(FrameFate::Dropped {
                    latency,
                    repetitions,
                }) => rec.terminations.push(Termination {
                    user: u as u32,
                    delivered: false,
                    latency,
                    repetitions,
                }),
                _ => {}
            }
        }
        rec
    }

    pub fn to_line(&self) -> String {
        fn list<T>(items: &[T], mut f: impl FnMut(&mut String, &T)) -> String {
            if items.is_empty() {
                return "-".into();
            }
            let mut s = String::new();
            for (i, it) in items.iter().enumerate() {
                if i > 0 {
                    s.push(',');
                }
                f(&mut s, it);
            }
            s
        }
        let actions = list(&self.actions, |s, a| write!(s, "{a}").unwrap());
        let decodes = list(&self.decodes, |s, (u, k)| write!(s, "{u}@{k}").unwrap());
        let terms = list(&self.terminations, |s, t| {
            let tag = if t.delivered { 'D' } else { 'X' };
            write!(s, "{}:{}:{}:{}", t.user, tag, t.latency, t.repetitions).unwrap()
        });
        let block = self
            .block_frames
            .map_or_else(|| "-".to_string(), |f| f.to_string());
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.frame, actions, decodes, self.broadband_successes, block, terms
        )
    }

    pub fn parse_line(line: &str, lineno: usize) -> Result<Self, LogParseError> {
        let bad = |msg: String| LogParseError::Malformed { line: lineno, msg };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 6 {
            return Err(bad(format!("expected 6 columns, found {}", cols.len())));
        }
        fn num<T: std::str::FromStr>(s: &str, what: &str, lineno: usize) -> Result<T, LogParseError> {
            s.parse().map_err(|_| LogParseError::Malformed {
                line: lineno,
                msg: format!("bad {what} `{s}`"),
            })
        }
        let items = |s: &'_ str| -> Vec<String> {
            if s == "-" {
                Vec::new()
            } else {
                s.split(',').map(str::to_owned).collect()
            }
        };
        let frame = num(cols[0], "frame", lineno)?;
        let actions = items(cols[1])
            .iter()
            .map(|a| num(a, "action", lineno))
            .collect::<Result<_, _>>()?;
        let decodes = items(cols[2])
            .iter()
            .map(|d| {
                let (u, k) = d
                    .split_once('@')
                    .ok_or_else(|| bad(format!("bad decode `{d}`")))?;
                Ok((num(u, "user", lineno)?, num(k, "slot", lineno)?))
            })
            .collect::<Result<_, LogParseError>>()?;
        let broadband_successes = num(cols[3], "bb_successes", lineno)?;
        let block_frames = match cols[4] {
            "-" => None,
            f => Some(num(f, "block_frames", lineno)?),
        };
        let terminations = items(cols[5])
            .iter()
            .map(|t| {
                let parts: Vec<&str> = t.split(':').collect();
                if parts.len() != 4 || !(parts[1] == "D" || parts[1] == "X") {
                    return Err(bad(format!("bad termination `{t}`")));
                }
                Ok(Termination {
                    user: num(parts[0], "user", lineno)?,
                    delivered: parts[1] == "D",
                    latency: num(parts[2], "latency", lineno)?,
                    repetitions: num(parts[3], "repetitions", lineno)?,
                })
            })
            .collect::<Result<_, LogParseError>>()?;
        Ok(FrameRecord {
            frame,
            actions,
            decodes,
            broadband_successes,
            block_frames,
            terminations,
        })
    }
}

pub struct FrameLogWriter<W: Write> {
    out: W,
}

impl<W: Write> FrameLogWriter<W> {
    pub fn new(mut out: W) -> io::Result<Self> {
        writeln!(out, "{FRAME_LOG_HEADER}")?;
        Ok(Self { out })
    }

    pub fn append(&mut self, rec: &FrameRecord) -> io::Result<()> {
        writeln!(self.out, "{}", rec.to_line())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Streams records back out of a log, skipping the version and header lines.
pub struct FrameLogReader<R: BufRead> {
    lines: io::Lines<R>,
    lineno: usize,
}

impl<R: BufRead> FrameLogReader<R> {
    pub fn new(input: R) -> Self {
        Self {
            lines: input.lines(),
            lineno: 0,
        }
    }
}

impl<R: BufRead> Iterator for FrameLogReader<R> {
    type Item = Result<FrameRecord, LogParseError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e.into())),
            };
            self.lineno += 1;
            if line.starts_with('#') || line.starts_with("frame\t") || line.is_empty() {
                continue;
            }
            return Some(FrameRecord::parse_line(&line, self.lineno));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn example_line() {
        let rec = FrameRecord::parse_line("17\t1,0,3\t0@0,2@1\t8\t-\t0:D:4:1,2:X:53:12", 1).unwrap();
        assert_eq!(rec.actions, vec![1, 0, 3]);
        assert_eq!(rec.decodes, vec![(0, 0), (2, 1)]);
        assert_eq!(rec.terminations[1].latency, 53);
        assert!(!rec.terminations[1].delivered);
        assert!(FrameRecord::parse_line("17\t1", 3).is_err());
        assert!(FrameRecord::parse_line("1\t-\t-\t0\t-\t0:Q:1:1", 3).is_err());
    }

    fn arb_record() -> impl Strategy<Value = FrameRecord> {
        (
            any::<u64>(),
            proptest::collection::vec(0u32..10, 0..12),
            proptest::collection::vec((0u32..12, 0u32..9), 0..5),
            0u32..10,
            proptest::option::of(1u32..9),
            proptest::collection::vec((0u32..12, any::<bool>(), 1u32..70, 0u32..50), 0..4),
        )
            .prop_map(|(frame, actions, decodes, bb, block, terms)| FrameRecord {
                frame,
                actions,
                decodes,
                broadband_successes: bb,
                block_frames: block,
                terminations: terms
                    .into_iter()
                    .map(|(user, delivered, latency, repetitions)| Termination {
                        user,
                        delivered,
                        latency,
                        repetitions,
                    })
                    .collect(),
            })
    }

    proptest! {
        #[test]
        fn log_round_trip(recs in proptest::collection::vec(arb_record(), 0..8)) {
            let mut w = FrameLogWriter::new(Vec::new()).unwrap();
            for r in &recs {
                w.append(r).unwrap();
            }
            let bytes = w.into_inner();
            let back: Vec<FrameRecord> = FrameLogReader::new(&bytes[..]).collect::<Result<_, _>>().unwrap();
            prop_assert_eq!(back, recs);
        }
    }
}
