//! CSV and JSON encodings of the library's artifacts.
//!
//! Floats are written in Rust's shortest round-trip form (scientific outside
//! `[1e-5, 1e16)`), with `-0` printed as `0`. Words are written as digit strings.

use ndarray::Array2;
use serde::ser::{SerializeSeq, Serializer};

use crate::analysis::{MixingCurve, MomentCurve};
use crate::simulator::PathSample;
use crate::word::Word;

pub(crate) fn serialize_matrix_rows<S: Serializer>(m: &Array2<f64>, s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for row in m.rows() {
        seq.serialize_element(&row.iter().map(|&x| x + 0.0).collect::<Vec<f64>>())?;
    }
    seq.end()
}

pub fn format_float(x: f64) -> String {
    let x = x + 0.0;
    if x == 0.0 || !x.is_finite() || (1e-5..1e16).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

struct Table(csv::Writer<Vec<u8>>);

impl Table {
    fn new<I: IntoIterator<Item = S>, S: AsRef<[u8]>>(header: I) -> Self {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).expect("in-memory write");
        Table(w)
    }

    fn row<I: IntoIterator<Item = String>>(&mut self, fields: I) {
        self.0.write_record(fields).expect("in-memory write");
    }

    fn finish(self) -> String {
        let bytes = self.0.into_inner().expect("in-memory flush");
        String::from_utf8(bytes).expect("fields are ASCII")
    }
}

/// A square matrix indexed by level-`level` words: header `state,<words>`,
/// then one row per source word.
pub fn matrix_csv(level: u32, m: &Array2<f64>) -> String {
    labelled_matrix_csv(&Word::all(level).collect::<Vec<_>>(), m)
}

/// A square matrix whose rows and columns are indexed by `states`.
pub fn labelled_matrix_csv(states: &[Word], m: &Array2<f64>) -> String {
    assert_eq!(m.dim(), (states.len(), states.len()));
    let words: Vec<String> = states.iter().map(|w| w.to_string()).collect();
    let mut t = Table::new(std::iter::once("state").chain(words.iter().map(String::as_str)));
    for (word, row) in words.iter().zip(m.rows()) {
        t.row(std::iter::once(word.clone()).chain(row.iter().map(|&x| format_float(x))));
    }
    t.finish()
}

/// Columns `m,lambda_m`, starting from `m = 0`.
pub fn eigenvalues_csv(eigenvalues: &[f64]) -> String {
    let mut t = Table::new(["m", "lambda_m"]);
    for (m, &l) in eigenvalues.iter().enumerate() {
        t.row([m.to_string(), format_float(l)]);
    }
    t.finish()
}

/// Columns `time,level,state`; the first row is `0,-,start`.
pub fn path_csv(path: &PathSample) -> String {
    let mut t = Table::new(["time", "level", "state"]);
    t.row(["0".to_string(), "-".to_string(), path.start().to_string()]);
    for (event, state) in path.trajectory() {
        t.row([format_float(event.time), event.level.to_string(), state.to_string()]);
    }
    t.finish()
}

/// Columns `word,frequency` over the level-`level` words in index order.
pub fn distribution_csv(level: u32, frequencies: &[f64]) -> String {
    assert_eq!(frequencies.len(), 1usize << level);
    let mut t = Table::new(["word", "frequency"]);
    for (w, &f) in Word::all(level).zip(frequencies) {
        t.row([w.to_string(), format_float(f)]);
    }
    t.finish()
}

/// Rows of `word,frequency` for an explicit list of states.
pub fn labelled_distribution_csv(states: &[Word], frequencies: &[f64]) -> String {
    assert_eq!(states.len(), frequencies.len());
    let mut t = Table::new(["word", "frequency"]);
    for (w, &f) in states.iter().zip(frequencies) {
        t.row([w.to_string(), format_float(f)]);
    }
    t.finish()
}

/// Columns `n,t,tv,bound,pass`.
pub fn mixing_csv(curves: &[MixingCurve]) -> String {
    let mut t = Table::new(["n", "t", "tv", "bound", "pass"]);
    for c in curves {
        for p in &c.points {
            t.row([
                c.level.to_string(),
                format_float(p.t),
                format_float(p.tv),
                format_float(p.bound),
                p.pass.to_string(),
            ]);
        }
    }
    t.finish()
}

/// Columns `r,t,M_r,truncation_K,tail_bound`.
pub fn moments_csv(curve: &MomentCurve) -> String {
    let mut t = Table::new(["r", "t", "M_r", "truncation_K", "tail_bound"]);
    for p in &curve.points {
        t.row([
            format_float(curve.r),
            format_float(p.t),
            format_float(p.value),
            p.truncation.to_string(),
            format_float(p.tail_bound),
        ]);
    }
    t.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Params;
    use crate::spectral::{eigenvalues, transition_kernel_spectral};

    #[test]
    fn spectrum_rows() {
        let csv = eigenvalues_csv(&eigenvalues(3, &Params::new(1.0, 2.0).unwrap()));
        assert_eq!(csv, "m,lambda_m\n0,0\n1,-4\n2,-10\n3,-22\n");
    }

    #[test]
    fn identity_kernel_csv() {
        let k = transition_kernel_spectral(1, 0.0, &Params::new(1.0, 1.0).unwrap()).unwrap();
        assert_eq!(matrix_csv(1, k.entries()), "state,0,1\n0,1,0\n1,0,1\n");
    }

    #[test]
    fn negative_zero_is_plain() {
        assert_eq!(format_float(-0.0), "0");
        assert_eq!(format_float(0.25), "0.25");
        assert_eq!(format_float(-4.0), "-4");
        assert_eq!(format_float(1.5e-12), "1.5e-12");
        for x in [1e-300, 3.7e-44, 0.1 + 0.2, 123456.789, 2e17] {
            assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn kernel_json_fields() {
        let k = transition_kernel_spectral(1, 0.0, &Params::new(1.0, 1.0).unwrap()).unwrap();
        let v: serde_json::Value = serde_json::to_value(&k).unwrap();
        for key in ["level", "t", "gamma", "theta", "entries"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["entries"][0][0], 1.0);
    }
}
