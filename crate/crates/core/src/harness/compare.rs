//! Method comparison tables.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::config::RunConfig;
use super::record::{execute, RunRecord};

pub const COMPARISON_FILE: &str = "comparison.csv";

/// One column per run, one row per checkpoint. Cells are empty where a run
/// stopped before the checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    /// `mmd_sq` or `accuracy`.
    pub metric: &'static str,
    pub checkpoints: Vec<usize>,
    pub columns: Vec<String>,
    /// `values[row][column]`.
    pub values: Vec<Vec<Option<f64>>>,
}

impl ComparisonTable {
    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.values.iter().map(|row| row[j]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration");
        for c in &self.columns {
            s.push(',');
            s.push_str(c);
        }
        s.push('\n');
        for (it, row) in self.checkpoints.iter().zip(&self.values) {
            s.push_str(&it.to_string());
            for v in row {
                s.push(',');
                if let Some(v) = v {
                    write!(s, "{v:.16e}").expect("write to string");
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Checks that the configs can share a table.
pub fn check_axes(configs: &[&RunConfig]) -> Result<()> {
    let first = configs
        .first()
        .ok_or_else(|| Error::validation("configs", "nothing to compare"))?;
    for (i, c) in configs.iter().enumerate().skip(1) {
        let axis = if c.target != first.target {
            "target"
        } else if c.n != first.n {
            "n"
        } else if c.checkpoints != first.checkpoints {
            "checkpoints"
        } else if c.seed != first.seed {
            "seed"
        } else if c.evaluation != first.evaluation {
            "evaluation"
        } else {
            continue;
        };
        return Err(Error::validation(
            format!("configs[{i}].{axis}"),
            "differs from configs[0]; compared runs must share target, n, checkpoints, seed and evaluation",
        ));
    }
    Ok(())
}

/// Column names: the method name, suffixed `#k` when a method repeats.
pub fn column_names(configs: &[&RunConfig]) -> Vec<String> {
    let mut names = Vec::with_capacity(configs.len());
    for (i, c) in configs.iter().enumerate() {
        let name = c.method.name();
        let seen = configs[..i]
            .iter()
            .filter(|p| p.method.name() == name)
            .count();
        names.push(if seen == 0 {
            name.to_string()
        } else {
            format!("{name}#{}", seen + 1)
        });
    }
    names
}

/// Aligns the headline metric of several records.
pub fn compare_records(records: &[RunRecord]) -> Result<ComparisonTable> {
    let configs: Vec<&RunConfig> = records.iter().map(|r| &r.config).collect();
    check_axes(&configs)?;
    let checkpoints = configs[0].checkpoints.clone();
    let metric = records
        .iter()
        .flat_map(|r| r.metrics.iter())
        .find_map(|m| m.headline())
        .map_or("mmd_sq", |(name, _)| name);
    let values = (0..checkpoints.len())
        .map(|row| {
            records
                .iter()
                .map(|r| {
                    r.metrics
                        .get(row)
                        .and_then(|m| m.headline())
                        .map(|(_, v)| v)
                })
                .collect()
        })
        .collect();
    Ok(ComparisonTable {
        metric,
        checkpoints,
        columns: column_names(&configs),
        values,
    })
}

/// Executes each config in memory and tabulates the results.
pub fn compare(configs: &[RunConfig]) -> Result<(ComparisonTable, Vec<RunRecord>)> {
    check_axes(&configs.iter().collect::<Vec<_>>())?;
    let records = configs.iter().map(execute).collect::<Result<Vec<_>>>()?;
    Ok((compare_records(&records)?, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Method;
    use crate::harness::parse_config;

    fn cfg(method: &str, seed: u64) -> RunConfig {
        parse_config(&format!(
            r#"{{"target": "sine", "method": "{method}", "n": 8, "iters": 4, "seed": {seed},
                "checkpoints": [0, 2, 4], "evaluation": {{"reference_size": 100}}}}"#
        ))
        .unwrap()
    }

    #[test]
    fn single_config_matches_its_metrics() {
        let (table, records) = compare(&[cfg("svn", 1)]).unwrap();
        assert_eq!(table.columns, vec!["svn"]);
        assert_eq!(table.metric, "mmd_sq");
        let expected: Vec<Option<f64>> = records[0]
            .metrics
            .iter()
            .map(|m| Some(m.mmd.unwrap().value))
            .collect();
        assert_eq!(table.column("svn").unwrap(), expected);
        assert_eq!(table.to_csv().lines().count(), 4);
    }

    #[test]
    fn all_methods_shape_and_duplicates() {
        let configs: Vec<RunConfig> = Method::ALL.iter().map(|m| cfg(m.name(), 2)).collect();
        let (table, _) = compare(&configs).unwrap();
        assert_eq!(table.columns.len(), 4);
        assert_eq!(table.values.len(), 3);
        assert!(table
            .values
            .iter()
            .all(|r| r.len() == 4 && r.iter().all(Option::is_some)));
        // Iteration 0 is the shared initialization.
        assert!(table.values[0].windows(2).all(|w| w[0] == w[1]));

        let (dup, _) = compare(&[cfg("svn", 2), cfg("svn", 2)]).unwrap();
        assert_eq!(dup.columns, vec!["svn", "svn#2"]);
        assert_eq!(dup.column("svn"), dup.column("svn#2"));
        let (diff, _) = compare(&[cfg("svn", 2), cfg("vanilla_svgd", 2)]).unwrap();
        assert_ne!(
            diff.column("svn").unwrap()[2],
            diff.column("vanilla_svgd").unwrap()[2]
        );
    }

    #[test]
    fn mismatched_axes_are_rejected() {
        match compare(&[cfg("svn", 1), cfg("svn", 2)]) {
            Err(Error::Validation { key, .. }) => assert_eq!(key, "configs[1].seed"),
            other => panic!("{other:?}"),
        }
        let mut other = cfg("svn", 1);
        other.n = 9;
        assert!(matches!(
            compare(&[cfg("svn", 1), other]),
            Err(Error::Validation { .. })
        ));
        assert!(matches!(compare(&[]), Err(Error::Validation { .. })));
    }
}
