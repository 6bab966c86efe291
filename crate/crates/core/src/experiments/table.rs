use serde::{Deserialize, Serialize};

use super::VERSION;

pub const TABLE_COLUMNS: [&str; 7] = ["axis_name", "axis_value", "engine", "metric_name", "value", "stderr", "verdict"];

/// One output line. Missing numbers are written as empty fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub axis_name: String,
    pub axis_value: f64,
    pub engine: String,
    pub metric_name: String,
    pub value: Option<f64>,
    pub stderr: Option<f64>,
    pub verdict: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub command: String,
    pub experiment: String,
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub rows: Vec<Row>,
}

impl Table {
    pub fn new(command: &str, experiment: &str, config_sha256: String, seed: Option<u64>) -> Self {
        Self { command: command.into(), experiment: experiment.into(), config_sha256, seed, rows: Vec::new() }
    }

    /// Comment block, header line, then rows.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# cogstab {VERSION} {}\n# experiment: {}\n# config_sha256: {}\n",
            self.command, self.experiment, self.config_sha256
        );
        if let Some(s) = self.seed {
            out.push_str(&format!("# seed: {s}\n"));
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(TABLE_COLUMNS).expect("in-memory write");
        let num = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.axis_name.clone(),
                r.axis_value.to_string(),
                r.engine.clone(),
                r.metric_name.clone(),
                num(r.value),
                num(r.stderr),
                r.verdict.clone(),
            ])
            .expect("in-memory write");
        }
        out.push_str(&String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields"));
        out
    }

    /// Reads a table back, skipping the comment block.
    pub fn parse_rows(text: &str) -> Result<Vec<Row>, String> {
        let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
        let mut rd = csv::Reader::from_reader(body.as_bytes());
        let headers = rd.headers().map_err(|e| e.to_string())?.clone();
        if headers.iter().collect::<Vec<_>>() != TABLE_COLUMNS {
            return Err(format!("unexpected header {headers:?}"));
        }
        let opt = |s: &str| -> Result<Option<f64>, String> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|e| format!("{s:?}: {e}"))
            }
        };
        rd.records()
            .map(|rec| {
                let rec = rec.map_err(|e| e.to_string())?;
                Ok(Row {
                    axis_name: rec[0].to_string(),
                    axis_value: rec[1].parse().map_err(|e| format!("{:?}: {e}", &rec[1]))?,
                    engine: rec[2].to_string(),
                    metric_name: rec[3].to_string(),
                    value: opt(&rec[4])?,
                    stderr: opt(&rec[5])?,
                    verdict: rec[6].to_string(),
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut t = Table::new("sweep", "demo", "abc".into(), Some(7));
        t.rows.push(Row {
            axis_name: "N".into(),
            axis_value: 3.0,
            engine: "analytic".into(),
            metric_name: "mu_p[q=0.5 Pe=0.2]".into(),
            value: Some(0.125),
            stderr: None,
            verdict: "ok".into(),
        });
        t.rows.push(Row { value: None, verdict: "error: a, b".into(), ..t.rows[0].clone() });
        let text = t.to_csv();
        assert!(text.starts_with("# cogstab"));
        assert!(text.contains("\naxis_name,axis_value,engine,metric_name,value,stderr,verdict\n"));
        assert_eq!(Table::parse_rows(&text).unwrap(), t.rows);
    }
}
