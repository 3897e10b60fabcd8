//! Per-subject trial data in the `stage,arm,value` CSV layout.
//!
//! Stage-1 rows carry arm `1` or `2`. Stage-2 rows carry `S` for the
//! selected arm; a numeral is tolerated when it names the arm that stage 1
//! actually selects. Leading `# key: value` lines hold metadata; other `#`
//! lines are comments.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::Serialize;

use selmean_core::model::{select_arm, Arm, TwoStageObservation};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TrialDataset {
    pub stage1_arm1: Vec<f64>,
    pub stage1_arm2: Vec<f64>,
    pub stage2: Vec<f64>,
    pub metadata: BTreeMap<String, String>,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn sum_sq_dev(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum()
}

impl TrialDataset {
    pub fn n1(&self) -> usize {
        self.stage1_arm1.len()
    }

    pub fn n2(&self) -> usize {
        self.stage2.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.stage1_arm1.is_empty() {
            return Err(CliError::Empty("stage-1 arm 1"));
        }
        if self.stage1_arm2.is_empty() {
            return Err(CliError::Empty("stage-1 arm 2"));
        }
        if self.stage1_arm1.len() != self.stage1_arm2.len() {
            return Err(CliError::RaggedArms {
                arm1: self.stage1_arm1.len(),
                arm2: self.stage1_arm2.len(),
            });
        }
        if self.stage2.is_empty() {
            return Err(CliError::Empty("stage-2"));
        }
        Ok(())
    }

    /// Stage-1 means of arm 1 and arm 2.
    pub fn stage1_means(&self) -> [f64; 2] {
        [mean(&self.stage1_arm1), mean(&self.stage1_arm2)]
    }

    pub fn stage2_mean(&self) -> f64 {
        mean(&self.stage2)
    }

    pub fn selected_arm(&self) -> Result<Arm> {
        let [a, b] = self.stage1_means();
        Ok(select_arm(a, b)?)
    }

    pub fn observation(&self) -> Result<TwoStageObservation> {
        self.validate()?;
        let [a, b] = self.stage1_means();
        Ok(TwoStageObservation::new(a, b, self.stage2_mean())?)
    }

    /// Pooled sample standard deviation of the two stage-1 arms.
    pub fn pooled_stage1_sd(&self) -> Result<f64> {
        self.validate()?;
        let n = self.n1();
        if n < 2 {
            return Err(CliError::PooledSdUndefined(n));
        }
        let ss = sum_sq_dev(&self.stage1_arm1) + sum_sq_dev(&self.stage1_arm2);
        Ok((ss / (2 * n - 2) as f64).sqrt())
    }

    /// The same data with the stage-1 arm labels exchanged.
    pub fn relabelled(&self) -> Self {
        Self {
            stage1_arm1: self.stage1_arm2.clone(),
            stage1_arm2: self.stage1_arm1.clone(),
            ..self.clone()
        }
    }
}

pub fn ingest_csv(path: &Path) -> Result<TrialDataset> {
    let file = std::fs::File::open(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    ingest_reader(file).map_err(|e| match e {
        CliError::Read { source, .. } => CliError::Read {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

pub fn ingest_reader(mut input: impl Read) -> Result<TrialDataset> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes).map_err(|source| CliError::Read {
        path: "<stream>".into(),
        source,
    })?;
    let text = String::from_utf8(bytes).map_err(|_| CliError::NotUtf8)?;
    ingest_str(&text)
}

fn parse_metadata(text: &str) -> Result<BTreeMap<String, String>> {
    let mut metadata = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let Some(body) = line.strip_prefix('#') else {
            if line.trim().is_empty() {
                continue;
            }
            break;
        };
        let Some((key, value)) = body.split_once(':') else {
            continue;
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(CliError::Metadata { line: i as u64 + 1 });
        }
        metadata.insert(key.to_string(), value.trim().to_string());
    }
    Ok(metadata)
}

fn parse_value(line: u64, raw: &str) -> Result<f64> {
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(CliError::NonNumeric {
            line,
            column: "value",
            value: raw.to_string(),
        }),
    }
}

pub fn ingest_str(text: &str) -> Result<TrialDataset> {
    let metadata = parse_metadata(text)?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let csv_error = |e: csv::Error| CliError::Csv {
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    };
    let headers = reader.headers().map_err(csv_error)?.clone();
    let column = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (Some(stage_col), Some(arm_col), Some(value_col)) = (column("stage"), column("arm"), column("value")) else {
        return Err(CliError::Header(headers.iter().collect::<Vec<_>>().join(",")));
    };

    let mut data = TrialDataset {
        metadata,
        ..Default::default()
    };
    // stage-2 numeral labels seen, with the first line each appeared on
    let mut numbered: [Option<u64>; 2] = [None, None];
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).unwrap_or("");
        let value = parse_value(line, field(value_col))?;
        let arm = field(arm_col);
        match field(stage_col) {
            "1" => match arm {
                "1" => data.stage1_arm1.push(value),
                "2" => data.stage1_arm2.push(value),
                _ => {
                    return Err(CliError::InvalidArm {
                        line,
                        stage: 1,
                        value: arm.to_string(),
                    })
                }
            },
            "2" => {
                match arm {
                    "S" | "s" => {}
                    "1" | "2" => {
                        let k = usize::from(arm == "2");
                        numbered[k].get_or_insert(line);
                        if numbered[1 - k].is_some() {
                            return Err(CliError::StageTwoBothArms { line });
                        }
                    }
                    _ => {
                        return Err(CliError::InvalidArm {
                            line,
                            stage: 2,
                            value: arm.to_string(),
                        })
                    }
                }
                data.stage2.push(value);
            }
            other => {
                return Err(CliError::InvalidStage {
                    line,
                    value: other.to_string(),
                })
            }
        }
    }

    data.validate()?;
    if numbered.iter().all(Option::is_none) {
        return Ok(data);
    }
    let selected = data.selected_arm()?;
    for (k, seen) in numbered.iter().enumerate() {
        let labelled = Arm::from_index(k as u8 + 1).expect("arm index");
        if seen.is_some() && labelled != selected {
            return Err(CliError::StageTwoWrongArm {
                labelled: labelled.index(),
                selected: selected.index(),
            });
        }
    }
    Ok(data)
}

/// Inverse of [`ingest_str`]: values are written in shortest round-trip form,
/// so re-ingesting reproduces every value bit for bit.
pub fn serialize(data: &TrialDataset) -> Result<String> {
    let mut out = String::new();
    for (key, value) in &data.metadata {
        let clean = |s: &str| !s.contains(['\n', '\r']) && s.trim() == s;
        if key.is_empty() || key.contains(':') || !clean(key) || !clean(value) {
            return Err(CliError::MetadataValue(key.clone()));
        }
        out.push_str(&format!("# {key}: {value}\n"));
    }
    out.push_str("stage,arm,value\n");
    let rows = [("1", "1", &data.stage1_arm1), ("1", "2", &data.stage1_arm2), ("2", "S", &data.stage2)];
    for (stage, arm, values) in rows {
        for v in values.iter() {
            out.push_str(&format!("{stage},{arm},{v}\n"));
        }
    }
    Ok(out)
}
