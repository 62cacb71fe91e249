use std::fmt::Write as _;

use thiserror::Error;

use super::{Instr, Line, Trace, WORDS_PER_LINE};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TraceError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: word index {word} out of range (0-7)")]
    WordOutOfRange { line: usize, word: u64 },
    #[error("thread ids are not dense: T{missing} never appears")]
    ThreadGap { missing: usize },
}

fn syntax(line: usize, msg: impl Into<String>) -> TraceError {
    TraceError::Syntax {
        line,
        msg: msg.into(),
    }
}

fn parse_u64(tok: &str) -> Option<u64> {
    if let Some(hex) = tok.strip_prefix("0x").or_else(|| tok.strip_prefix("0X")) {
        u64::from_str_radix(hex, 16).ok()
    } else {
        tok.parse::<u64>().ok()
    }
}

fn parse_value(tok: &str) -> Option<u64> {
    if let Some(neg) = tok.strip_prefix('-') {
        neg.parse::<i64>().ok().map(|v| (-v) as u64)
    } else {
        parse_u64(tok)
    }
}

fn parse_addr(tok: &str) -> Option<u64> {
    let hex = tok
        .strip_prefix("0x")
        .or_else(|| tok.strip_prefix("0X"))
        .unwrap_or(tok);
    u64::from_str_radix(hex, 16).ok()
}

/// Parses the line-oriented trace format. Per-thread order follows file
/// order; nothing about the cross-thread interleaving is kept.
pub fn parse_trace(text: &str) -> Result<Trace, TraceError> {
    let mut streams: Vec<Vec<Instr>> = Vec::new();
    let mut seen: Vec<bool> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let toks: Vec<&str> = content.split_whitespace().collect();
        let tid = toks[0]
            .strip_prefix('T')
            .and_then(|t| t.parse::<usize>().ok())
            .ok_or_else(|| syntax(lineno, format!("expected thread tag, found `{}`", toks[0])))?;
        let op = toks
            .get(1)
            .ok_or_else(|| syntax(lineno, "missing operation"))?
            .to_ascii_uppercase();
        let args = &toks[2..];
        let want = |n: usize| -> Result<(), TraceError> {
            if args.len() != n {
                Err(syntax(
                    lineno,
                    format!("{op} takes {n} argument(s), found {}", args.len()),
                ))
            } else {
                Ok(())
            }
        };
        let word_at = |i: usize| -> Result<u8, TraceError> {
            let w = parse_u64(args[i])
                .ok_or_else(|| syntax(lineno, format!("bad word index `{}`", args[i])))?;
            if w >= WORDS_PER_LINE as u64 {
                return Err(TraceError::WordOutOfRange {
                    line: lineno,
                    word: w,
                });
            }
            Ok(w as u8)
        };
        let line_at = |i: usize| -> Result<Line, TraceError> {
            parse_addr(args[i])
                .map(Line::from_byte_addr)
                .ok_or_else(|| syntax(lineno, format!("bad address `{}`", args[i])))
        };
        let lock_at = |i: usize| -> Result<u32, TraceError> {
            args[i]
                .parse::<u32>()
                .map_err(|_| syntax(lineno, format!("bad lock id `{}`", args[i])))
        };

        let instr = match op.as_str() {
            "BEGIN" => {
                want(0)?;
                Instr::Begin
            }
            "END" => {
                want(0)?;
                Instr::End
            }
            "ST" => {
                want(3)?;
                let line = line_at(0)?;
                let word = word_at(1)?;
                let value = parse_value(args[2])
                    .ok_or_else(|| syntax(lineno, format!("bad value `{}`", args[2])))?;
                Instr::Store { line, word, value }
            }
            "LD" => {
                want(2)?;
                Instr::Load {
                    line: line_at(0)?,
                    word: word_at(1)?,
                }
            }
            "LOCK" => {
                want(1)?;
                Instr::Lock(lock_at(0)?)
            }
            "UNLOCK" => {
                want(1)?;
                Instr::Unlock(lock_at(0)?)
            }
            "NOP" => {
                want(1)?;
                let n = args[0]
                    .parse::<u32>()
                    .ok()
                    .filter(|&n| n >= 1)
                    .ok_or_else(|| syntax(lineno, format!("bad cycle count `{}`", args[0])))?;
                Instr::Nop(n)
            }
            other => return Err(syntax(lineno, format!("unknown operation `{other}`"))),
        };

        if tid >= streams.len() {
            streams.resize_with(tid + 1, Vec::new);
            seen.resize(tid + 1, false);
        }
        seen[tid] = true;
        streams[tid].push(instr);
    }

    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(TraceError::ThreadGap { missing });
    }
    Ok(Trace::new(streams))
}

/// Serializes a trace in canonical form: thread 0's stream first, then
/// thread 1's, and so on. `parse_trace(&render(t)) == t`.
pub fn render(trace: &Trace) -> String {
    let mut out = String::new();
    for (tid, stream) in trace.streams().iter().enumerate() {
        for instr in stream {
            let _ = match *instr {
                Instr::Begin => writeln!(out, "T{tid} BEGIN"),
                Instr::End => writeln!(out, "T{tid} END"),
                Instr::Store { line, word, value } => {
                    writeln!(out, "T{tid} ST {:#x} {word} {value}", line.byte_addr())
                }
                Instr::Load { line, word } => {
                    writeln!(out, "T{tid} LD {:#x} {word}", line.byte_addr())
                }
                Instr::Lock(l) => writeln!(out, "T{tid} LOCK {l}"),
                Instr::Unlock(l) => writeln!(out, "T{tid} UNLOCK {l}"),
                Instr::Nop(n) => writeln!(out, "T{tid} NOP {n}"),
            };
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_has_no_threads() {
        let t = parse_trace("").unwrap();
        assert_eq!(t.thread_count(), 0);
        assert!(t.is_empty());
    }

    #[test]
    fn store_address_is_canonicalized() {
        let t = parse_trace("T0 BEGIN\nT0 ST 0x1000 0 7\nT0 END").unwrap();
        assert_eq!(t.thread_count(), 1);
        assert_eq!(t.stream(0).len(), 3);
        assert_eq!(
            t.stream(0)[1],
            Instr::Store {
                line: Line(0x40),
                word: 0,
                value: 7
            }
        );
    }

    #[test]
    fn word_index_out_of_range() {
        let err = parse_trace("T0 ST 0x1000 9 7").unwrap_err();
        assert_eq!(err, TraceError::WordOutOfRange { line: 1, word: 9 });
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let t = parse_trace("# header\n\nT0 BEGIN   # open\nT0 END\n").unwrap();
        assert_eq!(t.stream(0), &[Instr::Begin, Instr::End]);
    }

    #[test]
    fn thread_gap_is_rejected() {
        let err = parse_trace("T0 BEGIN\nT2 BEGIN").unwrap_err();
        assert_eq!(err, TraceError::ThreadGap { missing: 1 });
    }

    #[test]
    fn syntax_errors_report_line_numbers() {
        match parse_trace("T0 BEGIN\nT0 FROB\n") {
            Err(TraceError::Syntax { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_trace("X0 BEGIN"),
            Err(TraceError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            parse_trace("T0 NOP 0"),
            Err(TraceError::Syntax { line: 1, .. })
        ));
    }

    #[test]
    fn interleaved_threads_keep_per_thread_order() {
        let t = parse_trace("T1 NOP 3\nT0 NOP 1\nT1 NOP 4\nT0 NOP 2").unwrap();
        assert_eq!(t.stream(0), &[Instr::Nop(1), Instr::Nop(2)]);
        assert_eq!(t.stream(1), &[Instr::Nop(3), Instr::Nop(4)]);
    }

    #[test]
    fn negative_values_wrap_to_u64() {
        let t = parse_trace("T0 BEGIN\nT0 ST 40 1 -1\nT0 END").unwrap();
        assert_eq!(
            t.stream(0)[1],
            Instr::Store {
                line: Line(1),
                word: 1,
                value: u64::MAX
            }
        );
    }
}
