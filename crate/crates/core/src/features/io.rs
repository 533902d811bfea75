use std::io::{BufRead, Write};

use ndarray::Array2;

use super::manual::{FeatureFrame, MANUAL_FEATURES, lob_column_names};
use crate::error::{Error, Result};
use crate::lob::Label;

/// Writes the LOB block, the manual features and the label code, one row
/// per step, under a header of column names.
pub fn write_frame_csv<W: Write>(frame: &FeatureFrame, mut out: W) -> Result<()> {
    let mut names = frame.column_names();
    names.push("label".into());
    writeln!(out, "{}", names.join(","))?;
    for t in 0..frame.len() {
        let mut line = String::new();
        for v in frame.lob.row(t).iter().chain(frame.manual.row(t).iter()) {
            line.push_str(&v.to_string());
            line.push(',');
        }
        line.push_str(&frame.labels[t].code().to_string());
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Reads a frame written by [`write_frame_csv`]. Every LOB cell is marked
/// valid; placeholder information is not stored.
pub fn read_frame_csv<R: BufRead>(input: R) -> Result<FeatureFrame> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| Error::Parse { line: 1, message: "empty feature file".into() })??;
    let names: Vec<&str> = header.split(',').collect();
    let width = names.len();
    let lob_cols = width.checked_sub(MANUAL_FEATURES.len() + 1).filter(|c| c % 4 == 0).ok_or_else(|| Error::Parse {
        line: 1,
        message: format!("{width} columns do not form a feature frame"),
    })?;
    let levels = lob_cols / 4;
    let mut expected = lob_column_names(levels);
    expected.extend(MANUAL_FEATURES.iter().map(|s| s.to_string()));
    expected.push("label".into());
    if names != expected {
        return Err(Error::Parse { line: 1, message: "unexpected feature header".into() });
    }
    let (mut lob, mut manual, mut labels) = (Vec::new(), Vec::new(), Vec::new());
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(Error::Parse { line: lineno, message: format!("expected {width} fields, found {}", fields.len()) });
        }
        for (j, f) in fields[..width - 1].iter().enumerate() {
            let v: f64 = f.parse().map_err(|_| Error::Parse { line: lineno, message: format!("bad number {f:?}") })?;
            if j < lob_cols { lob.push(v) } else { manual.push(v) }
        }
        let code: u8 = fields[width - 1].parse().map_err(|_| Error::Parse { line: lineno, message: "bad label".into() })?;
        labels.push(Label::from_code(code).ok_or_else(|| Error::Parse { line: lineno, message: format!("unknown label {code}") })?);
    }
    let n = labels.len();
    Ok(FeatureFrame {
        levels,
        lob: Array2::from_shape_vec((n, lob_cols), lob).expect("row-major"),
        lob_valid: Array2::from_elem((n, lob_cols), true),
        manual: Array2::from_shape_vec((n, MANUAL_FEATURES.len()), manual).expect("row-major"),
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureConfig, build_manual_features};
    use crate::synth::{SynthConfig, generate};

    #[test]
    fn round_trip() {
        let series = generate(&SynthConfig { steps: 120, ..SynthConfig::default() }).unwrap();
        let frame = build_manual_features(&series, &FeatureConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_frame_csv(&frame, &mut buf).unwrap();
        let back = read_frame_csv(buf.as_slice()).unwrap();
        assert_eq!(back.lob, frame.lob);
        assert_eq!(back.manual, frame.manual);
        assert_eq!(back.labels, frame.labels);
        assert!(read_frame_csv("a,b\n".as_bytes()).is_err());
    }
}
