//! LOBSTER orderbook (4·l integer columns) and message (6 columns) files.

use std::io::{BufRead, Write};

use super::types::{EventKind, LobSnapshot, Side, Timestamp, TradeEvent};
use crate::error::{Error, Result};

/// Parses decimal seconds ("34200.004241176") into nanoseconds without
/// going through floating point. At most nine fractional digits.
pub fn parse_time(s: &str) -> Option<Timestamp> {
    let (int, frac) = match s.split_once('.') {
        Some((i, f)) => (i, f),
        None => (s, ""),
    };
    if int.is_empty() || frac.len() > 9 || !int.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let secs: u64 = int.parse().ok()?;
    let mut nanos: u64 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
    for _ in frac.len()..9 {
        nanos *= 10;
    }
    secs.checked_mul(Timestamp::NANOS_PER_SEC)?.checked_add(nanos).map(Timestamp)
}

/// Inverse of [`parse_time`]: trailing fractional zeros trimmed, at least
/// one fractional digit kept.
pub fn format_time(t: Timestamp) -> String {
    let secs = t.0 / Timestamp::NANOS_PER_SEC;
    let nanos = t.0 % Timestamp::NANOS_PER_SEC;
    let mut frac = format!("{nanos:09}");
    while frac.len() > 1 && frac.ends_with('0') {
        frac.pop();
    }
    format!("{secs}.{frac}")
}

fn int_field(field: &str, line: usize, what: &str) -> Result<i64> {
    field.trim().parse::<i64>().map_err(|_| Error::Parse {
        line,
        message: format!("{what}: '{field}' is not an integer"),
    })
}

/// Reads an orderbook file with `levels` levels. Row `i` takes its time from
/// `times[i]` when a parallel message file was supplied, else `i` seconds.
pub fn parse_orderbook_file<R: BufRead>(
    reader: R,
    levels: usize,
    times: Option<&[Timestamp]>,
) -> Result<Vec<LobSnapshot>> {
    if levels == 0 {
        return Err(Error::config("levels must be positive"));
    }
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 * levels {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {} columns, found {}", 4 * levels, fields.len()),
            });
        }
        let mut snap = LobSnapshot {
            time: Timestamp(0),
            ask_price: Vec::with_capacity(levels),
            ask_volume: Vec::with_capacity(levels),
            bid_price: Vec::with_capacity(levels),
            bid_volume: Vec::with_capacity(levels),
        };
        for lv in 0..levels {
            let base = 4 * lv;
            snap.ask_price.push(int_field(fields[base], line_no, "ask price")?);
            snap.ask_volume.push(volume(fields[base + 1], line_no)?);
            snap.bid_price.push(int_field(fields[base + 2], line_no, "bid price")?);
            snap.bid_volume.push(volume(fields[base + 3], line_no)?);
        }
        let row = out.len();
        snap.time = match times {
            Some(ts) => *ts.get(row).ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("message file has only {} rows", ts.len()),
            })?,
            None => Timestamp::from_secs(row as u64),
        };
        snap.validate(line_no)?;
        out.push(snap);
    }
    if let Some(ts) = times {
        if ts.len() != out.len() {
            return Err(Error::Parse {
                line: out.len(),
                message: format!("orderbook has {} rows but message file has {}", out.len(), ts.len()),
            });
        }
    }
    Ok(out)
}

fn volume(field: &str, line: usize) -> Result<u64> {
    let v = int_field(field, line, "size")?;
    u64::try_from(v).map_err(|_| Error::Validation { line, message: format!("negative volume {v}") })
}

pub fn write_orderbook_file<W: Write>(series: &[LobSnapshot], mut sink: W) -> Result<()> {
    let Some(first) = series.first() else { return Ok(()) };
    let levels = first.levels();
    let mut line = String::with_capacity(levels * 40);
    for (i, s) in series.iter().enumerate() {
        if s.levels() != levels {
            return Err(Error::Validation {
                line: i + 1,
                message: format!("mixed level counts: {} vs {}", s.levels(), levels),
            });
        }
        line.clear();
        for lv in 0..levels {
            if lv > 0 {
                line.push(',');
            }
            use std::fmt::Write as _;
            let _ = write!(
                line,
                "{},{},{},{}",
                s.ask_price[lv], s.ask_volume[lv], s.bid_price[lv], s.bid_volume[lv]
            );
        }
        line.push('\n');
        sink.write_all(line.as_bytes())?;
    }
    Ok(())
}

pub fn parse_message_file<R: BufRead>(reader: R) -> Result<Vec<TradeEvent>> {
    let mut out: Vec<TradeEvent> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 6 columns, found {}", f.len()),
            });
        }
        let time = parse_time(f[0].trim()).ok_or_else(|| Error::Parse {
            line: line_no,
            message: format!("bad timestamp '{}'", f[0]),
        })?;
        let code = int_field(f[1], line_no, "type")?;
        let kind = EventKind::from_code(code).ok_or_else(|| Error::Parse {
            line: line_no,
            message: format!("unknown event kind {code}"),
        })?;
        let order_id = int_field(f[2], line_no, "order id")?;
        let order_id = u64::try_from(order_id).map_err(|_| Error::Validation {
            line: line_no,
            message: format!("negative order id {order_id}"),
        })?;
        let size = int_field(f[3], line_no, "size")?;
        if size < 0 || (size == 0 && kind != EventKind::Halt) {
            return Err(Error::Validation { line: line_no, message: format!("invalid size {size}") });
        }
        let price = int_field(f[4], line_no, "price")?;
        let dir = int_field(f[5], line_no, "direction")?;
        let side = Side::from_direction(dir).ok_or_else(|| Error::Parse {
            line: line_no,
            message: format!("direction must be 1 or -1, found {dir}"),
        })?;
        if let Some(prev) = out.last() {
            if time < prev.time {
                return Err(Error::Validation { line: line_no, message: "event time decreases".into() });
            }
        }
        out.push(TradeEvent { time, kind, order_id, size: size as u64, price, side });
    }
    Ok(out)
}

pub fn write_message_file<W: Write>(events: &[TradeEvent], mut sink: W) -> Result<()> {
    for e in events {
        writeln!(
            sink,
            "{},{},{},{},{},{}",
            format_time(e.time),
            e.kind.code(),
            e.order_id,
            e.size,
            e.price,
            e.side.direction()
        )?;
    }
    Ok(())
}

/// Wall-clock resampling: for every grid time `start + k·interval` up to the
/// last snapshot, the last snapshot at or before it (stamped with the grid
/// time). Grid points before the first snapshot are skipped.
pub fn resample_wall_clock(snapshots: &[LobSnapshot], interval_ns: u64) -> Vec<LobSnapshot> {
    let (Some(first), Some(last)) = (snapshots.first(), snapshots.last()) else {
        return Vec::new();
    };
    let interval_ns = interval_ns.max(1);
    let mut out = Vec::new();
    let mut idx = 0;
    let mut t = first.time.0;
    while t <= last.time.0 {
        while idx + 1 < snapshots.len() && snapshots[idx + 1].time.0 <= t {
            idx += 1;
        }
        let mut s = snapshots[idx].clone();
        s.time = Timestamp(t);
        out.push(s);
        t += interval_ns;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_level_row_maps_fields() {
        let rows = "5853000,100,5852900,50,5853100,20,5852800,80\n";
        let s = parse_orderbook_file(rows.as_bytes(), 2, None).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].ask_price, vec![5853000, 5853100]);
        assert_eq!(s[0].ask_volume, vec![100, 20]);
        assert_eq!(s[0].bid_price, vec![5852900, 5852800]);
        assert_eq!(s[0].bid_volume, vec![50, 80]);
    }

    #[test]
    fn empty_stream_is_empty() {
        assert!(parse_orderbook_file(&b""[..], 5, None).unwrap().is_empty());
        assert!(parse_message_file(&b""[..]).unwrap().is_empty());
    }

    #[test]
    fn column_count_error_has_line() {
        let rows = "101,1,100,1\n101,1,100\n";
        match parse_orderbook_file(rows.as_bytes(), 1, None) {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ordering_violation_reported_not_repaired() {
        let rows = "101,1,100,1,101,1,99,1\n";
        let err = parse_orderbook_file(rows.as_bytes(), 2, None).unwrap_err();
        assert!(matches!(err, Error::Validation { line: 1, .. }));
        assert!(err.to_string().contains("level 2"));
    }

    #[test]
    fn message_row_parses() {
        let ev = parse_message_file(&b"34200.004241176,1,16113575,18,585100,-1\n"[..]).unwrap();
        let e = ev[0];
        assert_eq!(e.kind, EventKind::Submission);
        assert_eq!(e.side, Side::Sell);
        assert_eq!(e.size, 18);
        assert_eq!(e.price, 585100);
        assert_eq!(e.order_id, 16113575);
        assert_eq!(e.time, Timestamp(34_200_004_241_176));
    }

    #[test]
    fn full_delete_buy() {
        let ev = parse_message_file(&b"36000.0,3,42,5,1000000,1\n"[..]).unwrap();
        assert_eq!(ev[0].kind, EventKind::FullDelete);
        assert_eq!(ev[0].side, Side::Buy);
        assert_eq!(ev[0].time, Timestamp::from_secs(36000));
    }

    #[test]
    fn unknown_type_rejected() {
        let err = parse_message_file(&b"36000.0,6,42,5,1000000,1\n"[..]).unwrap_err();
        assert!(err.to_string().contains("unknown event kind"), "{err}");
    }

    #[test]
    fn negative_size_rejected() {
        let err = parse_message_file(&b"36000.0,1,42,-5,1000000,1\n"[..]).unwrap_err();
        assert!(matches!(err, Error::Validation { .. }));
    }

    #[test]
    fn time_format_roundtrip() {
        for s in ["34200.004241176", "36000.0", "0.5", "34200.18960767"] {
            assert_eq!(format_time(parse_time(s).unwrap()), s);
        }
        assert!(parse_time("1.0123456789").is_none());
        assert!(parse_time("-1.0").is_none());
    }

    #[test]
    fn single_level_writes_four_columns() {
        let s = parse_orderbook_file(&b"101,3,100,4\n"[..], 1, None).unwrap();
        let mut out = Vec::new();
        write_orderbook_file(&s, &mut out).unwrap();
        assert_eq!(out, b"101,3,100,4\n");
    }

    #[test]
    fn mixed_levels_rejected_on_write() {
        let mut s = parse_orderbook_file(&b"101,3,100,4\n"[..], 1, None).unwrap();
        let two = parse_orderbook_file(&b"101,3,100,4,102,1,99,1\n"[..], 2, None).unwrap();
        s.extend(two);
        assert!(write_orderbook_file(&s, Vec::new()).is_err());
    }

    #[test]
    fn message_times_feed_orderbook() {
        let msgs = parse_message_file(&b"34200.1,1,1,5,101,-1\n34200.2,1,2,5,100,1\n"[..]).unwrap();
        let times: Vec<_> = msgs.iter().map(|m| m.time).collect();
        let book = parse_orderbook_file(&b"101,5,99,1\n101,5,100,5\n"[..], 1, Some(&times)).unwrap();
        assert_eq!(book[1].time, parse_time("34200.2").unwrap());
        assert!(parse_orderbook_file(&b"101,5,99,1\n"[..], 1, Some(&times)).is_err());
    }

    #[test]
    fn resampling_holds_last_state() {
        let rows = "101,5,99,1\n102,5,100,5\n";
        let mut book = parse_orderbook_file(rows.as_bytes(), 1, None).unwrap();
        book[1].time = Timestamp(2_500_000_000);
        let grid = resample_wall_clock(&book, 1_000_000_000);
        assert_eq!(grid.len(), 3);
        assert_eq!(grid[2].ask_price[0], 101);
        assert_eq!(grid[2].time, Timestamp(2_000_000_000));
    }
}
