//! CSV reports: RFC 4180 quoting, UTF-8, LF line endings. Leading `# `
//! lines carry provenance; the split report also ends with a
//! `# optimal_index=` footer.

use std::fmt::Display;
use std::path::Path;

use microt_core::split::SplitReport;
use microt_core::stage::{RoutingOutcome, SweepRow};

use crate::error::{PipelineError, Result};
use crate::formats::write_file;

/// A CSV document held in memory until written.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub comments: Vec<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub footer: Vec<String>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            ..Table::default()
        }
    }

    pub fn comment(&mut self, line: impl Into<String>) -> &mut Self {
        self.comments.push(line.into());
        self
    }

    pub fn row(&mut self, fields: Vec<String>) -> &mut Self {
        debug_assert_eq!(fields.len(), self.header.len());
        self.rows.push(fields);
        self
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for c in &self.comments {
            out.extend_from_slice(format!("# {c}\n").as_bytes());
        }
        {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(&mut out);
            w.write_record(&self.header).expect("in-memory write");
            for r in &self.rows {
                w.write_record(r).expect("in-memory write");
            }
            w.flush().expect("in-memory write");
        }
        for f in &self.footer {
            out.extend_from_slice(format!("# {f}\n").as_bytes());
        }
        out
    }

    pub fn write(&self, stage: &'static str, path: &Path) -> Result<()> {
        write_file(stage, path, &self.to_bytes())
    }

    /// Parses a file written by [`Table::write`].
    pub fn read(stage: &'static str, path: &Path) -> Result<Table> {
        let text = std::fs::read_to_string(path).map_err(|source| {
            if source.kind() == std::io::ErrorKind::NotFound {
                PipelineError::MissingArtifact {
                    stage,
                    path: path.to_path_buf(),
                }
            } else {
                PipelineError::Io {
                    stage,
                    path: path.to_path_buf(),
                    source,
                }
            }
        })?;
        let csv_err = |source| PipelineError::Csv {
            stage,
            path: path.to_path_buf(),
            source,
        };
        let mut table = Table::default();
        let mut seen_body = false;
        for line in text.lines() {
            if let Some(c) = line.strip_prefix("# ") {
                if seen_body {
                    table.footer.push(c.to_string());
                } else {
                    table.comments.push(c.to_string());
                }
            } else {
                seen_body = true;
            }
        }
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        table.header = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        for rec in rdr.records() {
            table.rows.push(rec.map_err(csv_err)?.iter().map(str::to_string).collect());
        }
        Ok(table)
    }

    /// Index of a named column.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Parses every value of a named column.
    pub fn parse_column<T: std::str::FromStr>(&self, stage: &'static str, path: &Path, name: &str) -> Result<Vec<T>> {
        let bad = |message: String| PipelineError::Format {
            stage,
            path: path.to_path_buf(),
            message,
        };
        let col = self.column(name).ok_or_else(|| bad(format!("missing column {name}")))?;
        self.rows
            .iter()
            .map(|r| r[col].parse::<T>().map_err(|_| bad(format!("bad {name} value {:?}", r[col]))))
            .collect()
    }
}

fn s(v: impl Display) -> String {
    v.to_string()
}

fn opt(v: Option<impl Display>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn split_table(report: &SplitReport) -> Table {
    let mut t = Table::new(&[
        "index",
        "accuracy",
        "macs",
        "delta_acc",
        "delta_mac",
        "gain",
        "gain_norm",
        "acc_loss_ratio",
        "acc_loss_ratio_norm",
        "mac_reduction_ratio",
        "mac_reduction_ratio_norm",
        "fused_score",
        "beats_full",
    ]);
    t.comment(format!("accuracy_source={}", report.accuracy_source))
        .comment(format!(
            "candidate_range={}..={}",
            report.candidate_range.0, report.candidate_range.1
        ))
        .comment(format!("accuracy_full={}", report.accuracy_full))
        .comment(format!("macs_full={}", report.macs_full));
    for c in &report.candidates {
        t.row(vec![
            s(c.index),
            s(c.accuracy),
            s(c.macs),
            opt(c.delta_acc),
            opt(c.delta_mac),
            opt(c.gain),
            s(c.gain_norm),
            s(c.acc_loss_ratio),
            s(c.acc_loss_ratio_norm),
            s(c.mac_reduction_ratio),
            s(c.mac_reduction_ratio_norm),
            s(c.fused_score),
            s(c.beats_full),
        ]);
    }
    t.footer.push(format!("optimal_index={}", report.optimal_index));
    t
}

/// Reads the chosen index back from a split report footer.
pub fn optimal_index(table: &Table) -> Option<usize> {
    table
        .footer
        .iter()
        .find_map(|f| f.strip_prefix("optimal_index=")?.parse().ok())
}

pub fn routing_table(outcome: &RoutingOutcome) -> Table {
    let mut t = Table::new(&["sample_id", "confidence", "exited_early", "prediction", "label", "macs"]);
    t.comment("confidence=max softmax probability of the part head; exit when confidence >= threshold");
    for (i, r) in outcome.samples.iter().enumerate() {
        t.row(vec![
            s(i),
            s(r.confidence),
            s(r.exited_early),
            s(r.prediction),
            opt(r.label),
            s(r.macs),
        ]);
    }
    t
}

pub fn sweep_table(rows: &[(Option<f64>, SweepRow)]) -> Table {
    let mut t = Table::new(&["factor", "target_ratio", "threshold", "ratio", "accuracy", "expected_macs"]);
    for (target, r) in rows {
        t.row(vec![
            s(r.factor),
            opt(*target),
            s(r.threshold),
            s(r.ratio),
            opt(r.accuracy),
            s(r.expected_macs),
        ]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quoting_and_line_endings() {
        let mut t = Table::new(&["a", "b"]);
        t.comment("note");
        t.row(vec!["x,y".into(), "say \"hi\"".into()]);
        t.footer.push("end=1".into());
        let text = String::from_utf8(t.to_bytes()).unwrap();
        assert_eq!(text, "# note\na,b\n\"x,y\",\"say \"\"hi\"\"\"\n# end=1\n");
        assert!(!text.contains('\r'));
    }

    #[test]
    fn read_back() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let mut t = Table::new(&["k", "v"]);
        t.comment("c1");
        t.row(vec!["1".into(), "0.25".into()]);
        t.row(vec!["2".into(), "".into()]);
        t.footer.push("optimal_index=2".into());
        t.write("test", &path).unwrap();
        let back = Table::read("test", &path).unwrap();
        assert_eq!(back, t);
        assert_eq!(optimal_index(&back), Some(2));
        assert_eq!(back.parse_column::<u32>("test", &path, "k").unwrap(), vec![1, 2]);
    }

    #[test]
    fn missing_file_is_missing_artifact() {
        let err = Table::read("report", Path::new("/nonexistent/x.csv")).unwrap_err();
        assert!(matches!(err, PipelineError::MissingArtifact { stage: "report", .. }));
    }
}
