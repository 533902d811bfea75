//! Persisted series layout: LOBSTER-format CSVs plus sidecars.
//!
//! ```text
//! <dir>/orderbook.csv   4·l integer columns per row
//! <dir>/message.csv     6-column message rows
//! <dir>/labels.txt      one label code per row (0, 1; 2 = ignore)
//! <dir>/spans.jsonl     {"start","end","side","levels":[..],"volume"} per line
//! <dir>/times.txt       snapshot times, only when they are not the row index
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::lobster::{format_time, parse_message_file, parse_orderbook_file, parse_time, write_message_file, write_orderbook_file};
use super::types::{AnomalySpan, Label, LabeledSeries, Timestamp};
use crate::error::{Error, Result};

pub struct SeriesFiles;

impl SeriesFiles {
    pub const ORDERBOOK: &'static str = "orderbook.csv";
    pub const MESSAGE: &'static str = "message.csv";
    pub const LABELS: &'static str = "labels.txt";
    pub const SPANS: &'static str = "spans.jsonl";
    pub const TIMES: &'static str = "times.txt";
}

pub fn write_labels<W: Write>(labels: &[Label], mut sink: W) -> Result<()> {
    for l in labels {
        writeln!(sink, "{}", l.code())?;
    }
    Ok(())
}

pub fn read_labels<R: BufRead>(reader: R) -> Result<Vec<Label>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let code: u8 = t.parse().map_err(|_| Error::Parse { line: i + 1, message: format!("bad label '{t}'") })?;
        out.push(Label::from_code(code).ok_or_else(|| Error::Parse { line: i + 1, message: format!("bad label {code}") })?);
    }
    Ok(out)
}

pub fn write_spans<W: Write>(spans: &[AnomalySpan], mut sink: W) -> Result<()> {
    for s in spans {
        serde_json::to_writer(&mut sink, s)?;
        sink.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_spans<R: BufRead>(reader: R) -> Result<Vec<AnomalySpan>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?);
    }
    Ok(out)
}

pub fn write_series_dir(series: &LabeledSeries, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join(SeriesFiles::ORDERBOOK))?);
    write_orderbook_file(&series.snapshots, &mut w)?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join(SeriesFiles::MESSAGE))?);
    write_message_file(&series.events, &mut w)?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join(SeriesFiles::LABELS))?);
    write_labels(&series.labels, &mut w)?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join(SeriesFiles::SPANS))?);
    write_spans(&series.spans, &mut w)?;
    w.flush()?;
    let row_index_times = series
        .snapshots
        .iter()
        .enumerate()
        .all(|(i, s)| s.time == Timestamp::from_secs(i as u64));
    let times_path = dir.join(SeriesFiles::TIMES);
    if row_index_times {
        if times_path.exists() {
            std::fs::remove_file(times_path)?;
        }
    } else {
        let mut w = BufWriter::new(File::create(times_path)?);
        for s in &series.snapshots {
            writeln!(w, "{}", format_time(s.time))?;
        }
        w.flush()?;
    }
    Ok(())
}

pub fn read_series_dir(dir: &Path, levels: usize) -> Result<LabeledSeries> {
    let open = |name: &str| -> Result<BufReader<File>> { Ok(BufReader::new(File::open(dir.join(name))?)) };
    let times_path = dir.join(SeriesFiles::TIMES);
    let times = if times_path.exists() {
        let mut ts = Vec::new();
        for (i, line) in open(SeriesFiles::TIMES)?.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            ts.push(parse_time(line.trim()).ok_or_else(|| Error::Parse { line: i + 1, message: "bad time".into() })?);
        }
        Some(ts)
    } else {
        None
    };
    let snapshots = parse_orderbook_file(open(SeriesFiles::ORDERBOOK)?, levels, times.as_deref())?;
    let events = parse_message_file(open(SeriesFiles::MESSAGE)?)?;
    let labels = read_labels(open(SeriesFiles::LABELS)?)?;
    let spans = read_spans(open(SeriesFiles::SPANS)?)?;
    let series = LabeledSeries { snapshots, events, labels, spans };
    series.validate()?;
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lob::BookSide;

    #[test]
    fn span_jsonl_layout() {
        let span = AnomalySpan { start: 3, end: 5, side: BookSide::Ask, levels: vec![3, 2, 2], volume: 400 };
        let mut out = Vec::new();
        write_spans(std::slice::from_ref(&span), &mut out).unwrap();
        let text = String::from_utf8(out.clone()).unwrap();
        assert_eq!(text, "{\"start\":3,\"end\":5,\"side\":\"ask\",\"levels\":[3,2,2],\"volume\":400}\n");
        assert_eq!(read_spans(&out[..]).unwrap(), vec![span]);
    }

    #[test]
    fn labels_roundtrip() {
        let labels = vec![Label::Normal, Label::Anomaly, Label::Ignore];
        let mut out = Vec::new();
        write_labels(&labels, &mut out).unwrap();
        assert_eq!(out, b"0\n1\n2\n");
        assert_eq!(read_labels(&out[..]).unwrap(), labels);
    }
}
