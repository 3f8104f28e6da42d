//! Executing a config and persisting its outputs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::dynamics::{run, RunStatus};
use crate::error::{Error, Result};
use crate::metrics::{predictive_metrics, MmdReference, MmdReport, PredictiveMetrics};
use crate::particles::ParticleSet;
use crate::targets::TargetModel;

use super::config::RunConfig;

pub const METRICS_FILE: &str = "metrics.json";
pub const TIMING_FILE: &str = "timing.csv";

/// Scores of one snapshot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub iteration: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mmd: Option<MmdReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predictive: Option<PredictiveMetrics>,
}

impl MetricRow {
    /// The number a comparison table reports: squared MMD, else predictive accuracy.
    pub fn headline(&self) -> Option<(&'static str, f64)> {
        match (&self.mmd, &self.predictive) {
            (Some(m), _) => Some(("mmd_sq", m.value)),
            (None, Some(p)) => Some(("accuracy", p.accuracy)),
            (None, None) => None,
        }
    }
}

/// Outcome of one run.
///
/// The serialized form (the metrics file) holds everything but the
/// particle snapshots and the timings, and is fully determined by the config.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub config: RunConfig,
    pub status: RunStatus,
    /// Set when the run stopped before reaching every checkpoint.
    pub partial: bool,
    pub iterations_run: usize,
    pub final_direction_norm: Option<f64>,
    pub metrics: Vec<MetricRow>,
    #[serde(skip)]
    pub snapshots: Vec<ParticleSet>,
    /// Seconds spent in each executed iteration.
    #[serde(skip)]
    pub wall_clock: Vec<f64>,
}

impl RunRecord {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("record serializes");
        s.push('\n');
        s
    }

    /// Checkpoints that have a snapshot, in order.
    pub fn reached_checkpoints(&self) -> &[usize] {
        &self.config.checkpoints[..self.snapshots.len()]
    }
}

enum Scorer {
    Mmd(MmdReference),
    Predictive(crate::targets::LogisticDataset),
}

fn scorer(
    config: &RunConfig,
    model: &TargetModel,
    test: Option<crate::targets::LogisticDataset>,
) -> Result<Scorer> {
    if let TargetModel::Logistic(l) = model {
        return Ok(Scorer::Predictive(test.unwrap_or_else(|| l.data().clone())));
    }
    let e = &config.evaluation;
    let reference = model.reference_sample(e.reference_size, e.reference_seed)?;
    Ok(Scorer::Mmd(MmdReference::new(&reference, e.mmd_bandwidth)?))
}

/// Runs the config in memory and scores every snapshot. Never touches the
/// output directory.
pub fn execute(config: &RunConfig) -> Result<RunRecord> {
    let (settings, test) = config.settings()?;
    let scorer = scorer(config, &settings.model, test)?;
    let traj = run(&settings)?;
    let metrics = traj
        .snapshots
        .iter()
        .zip(&traj.checkpoints)
        .map(|(snap, &iteration)| {
            Ok(match &scorer {
                Scorer::Mmd(r) => MetricRow {
                    iteration,
                    mmd: Some(r.mmd_sq(snap)?),
                    predictive: None,
                },
                Scorer::Predictive(data) => MetricRow {
                    iteration,
                    mmd: None,
                    predictive: Some(predictive_metrics(snap, data)?),
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunRecord {
        config: config.clone(),
        partial: traj.snapshots.len() < config.checkpoints.len(),
        status: traj.status,
        iterations_run: traj.iterations_run,
        final_direction_norm: traj.final_direction_norm,
        metrics,
        snapshots: traj.snapshots,
        wall_clock: traj.wall_clock,
    })
}

pub fn particle_file_name(iteration: usize) -> String {
    format!("particles_iter_{iteration:05}.csv")
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Data {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    }
}

/// Formats a snapshot as `iter,particle,coord_0..` rows with 17 significant digits.
pub fn particles_csv(iteration: usize, particles: &ParticleSet) -> String {
    let mut s = String::from("iter,particle");
    for k in 0..particles.dim() {
        s.push_str(&format!(",coord_{k}"));
    }
    s.push('\n');
    for (i, row) in particles.rows().iter().enumerate() {
        s.push_str(&format!("{iteration},{i}"));
        for v in row {
            s.push_str(&format!(",{v:.16e}"));
        }
        s.push('\n');
    }
    s
}

pub fn write_particles(path: &Path, iteration: usize, particles: &ParticleSet) -> Result<()> {
    write_file(path, &particles_csv(iteration, particles))
}

/// Reads a particle file back. Returns the iteration column and the positions.
pub fn load_particles(path: &Path) -> Result<(usize, ParticleSet)> {
    let data_err = |message: String| Error::Data {
        path: path.to_path_buf(),
        message,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    let d = header.len().saturating_sub(2);
    let expected = ["iter", "particle"]
        .into_iter()
        .map(String::from)
        .chain((0..d).map(|k| format!("coord_{k}")));
    if d == 0 || !header.iter().eq(expected) {
        return Err(data_err(format!(
            "unexpected header {:?}",
            header.iter().collect::<Vec<_>>()
        )));
    }
    let mut iteration = None;
    let mut rows = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let at = |m: String| data_err(format!("row {}: {m}", line + 1));
        let iter: usize = record[0].parse().map_err(|e| at(format!("{e}")))?;
        let idx: usize = record[1].parse().map_err(|e| at(format!("{e}")))?;
        if *iteration.get_or_insert(iter) != iter {
            return Err(at("mixed iterations".into()));
        }
        if idx != rows.len() {
            return Err(at(format!("particle index {idx}, expected {}", rows.len())));
        }
        let row = record
            .iter()
            .skip(2)
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| at(format!("{e}")))?;
        rows.push(row);
    }
    let iteration = iteration.ok_or_else(|| data_err("no particle rows".into()))?;
    let mut set = ParticleSet::from_rows(&rows).map_err(|e| data_err(e.to_string()))?;
    set.set_iteration(iteration);
    Ok((iteration, set))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::File::create(path)
        .and_then(|mut f| f.write_all(contents.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

/// Writes particle files, the metrics file and the timing file into `dir`.
/// Returns the paths written, particle files first.
pub fn write_outputs(record: &RunRecord, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for (snap, &it) in record.snapshots.iter().zip(record.reached_checkpoints()) {
        let path = dir.join(particle_file_name(it));
        write_particles(&path, it, snap)?;
        written.push(path);
    }
    let metrics = dir.join(METRICS_FILE);
    write_file(&metrics, &record.to_json())?;
    written.push(metrics);

    let timing = dir.join(TIMING_FILE);
    let mut t = String::from("iteration,seconds\n");
    for (i, s) in record.wall_clock.iter().enumerate() {
        t.push_str(&format!("{i},{s:e}\n"));
    }
    write_file(&timing, &t)?;
    written.push(timing);
    Ok(written)
}

/// Executes the config and writes its outputs to `config.output_dir`.
///
/// An aborted run still writes what it reached, flagged `partial`, then
/// returns the numerical error with the iteration where it stopped.
pub fn run_experiment(config: &RunConfig) -> Result<RunRecord> {
    let record = execute(config)?;
    write_outputs(&record, &config.output_dir)?;
    if let RunStatus::Aborted { iteration, message } = &record.status {
        return Err(Error::Numerical {
            iteration: *iteration,
            message: format!(
                "{message} (partial outputs in {})",
                config.output_dir.display()
            ),
        });
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::parse_config;

    fn config(extra: &str) -> RunConfig {
        parse_config(&format!(
            r#"{{"target": "star", "method": "matrix_svgd_mixture", "n": 12, "iters": 6, "seed": 4,
                "checkpoints": [0, 6], "evaluation": {{"reference_size": 200}}{extra}}}"#
        ))
        .unwrap()
    }

    #[test]
    fn execute_scores_each_checkpoint() {
        let rec = execute(&config("")).unwrap();
        assert_eq!(rec.snapshots.len(), 2);
        assert_eq!(
            rec.metrics.iter().map(|m| m.iteration).collect::<Vec<_>>(),
            vec![0, 6]
        );
        assert!(!rec.partial);
        assert_eq!(rec.wall_clock.len(), 6);
        let bw: Vec<f64> = rec
            .metrics
            .iter()
            .map(|m| m.mmd.unwrap().bandwidth)
            .collect();
        assert_eq!(bw[0], bw[1]);
        assert!(!rec.to_json().contains("wall_clock"));
    }

    #[test]
    fn particle_files_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut p = ParticleSet::gaussian(9, &[1e-300, -3.0, 7e12], 1.0, &mut rng).unwrap();
        p.positions_mut()[(0, 0)] = 0.1 + 0.2;
        p.positions_mut()[(1, 1)] = -f64::MIN_POSITIVE;
        let path = dir.path().join(particle_file_name(17));
        write_particles(&path, 17, &p).unwrap();
        let (it, back) = load_particles(&path).unwrap();
        assert_eq!(it, 17);
        assert_eq!(back.positions(), p.positions());
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("iter,particle,coord_0,coord_1,coord_2\n"));
    }

    #[test]
    fn load_rejects_malformed_files() {
        let dir = tempfile::tempdir().unwrap();
        let cases = [
            "x,particle,coord_0\n0,0,1\n",
            "iter,particle,coord_0\n0,1,1\n",
            "iter,particle,coord_0\n0,0,1\n1,1,2\n",
            "iter,particle,coord_0\n0,0,abc\n",
            "iter,particle,coord_0\n",
        ];
        for (i, text) in cases.iter().enumerate() {
            let path = dir.path().join(format!("{i}.csv"));
            fs::write(&path, text).unwrap();
            assert!(
                matches!(load_particles(&path), Err(Error::Data { .. })),
                "case {i}"
            );
        }
        assert!(matches!(
            load_particles(&dir.path().join("none.csv")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn outputs_are_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        let mut ca = config("");
        ca.output_dir = a.clone();
        let mut cb = ca.clone();
        cb.output_dir = b.clone();
        let ra = run_experiment(&ca).unwrap();
        run_experiment(&cb).unwrap();
        for name in [particle_file_name(0), particle_file_name(6)] {
            assert_eq!(
                fs::read(a.join(&name)).unwrap(),
                fs::read(b.join(&name)).unwrap()
            );
        }
        // The echo differs only by output_dir.
        let strip = |p: &Path| {
            fs::read_to_string(p.join(METRICS_FILE))
                .unwrap()
                .replace(&p.display().to_string(), "")
        };
        assert_eq!(strip(&a), strip(&b));
        assert_eq!(
            ra.to_json(),
            fs::read_to_string(a.join(METRICS_FILE)).unwrap()
        );
        let timing = fs::read_to_string(a.join(TIMING_FILE)).unwrap();
        assert_eq!(timing.lines().count(), 7);
    }

    #[test]
    fn abort_writes_partial_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = parse_config(
            r#"{"target": "star", "method": "vanilla_svgd", "n": 4, "iters": 20, "seed": 1,
                "checkpoints": [0, 1, 20], "stepper": {"method": "fixed", "rate": 1e308},
                "evaluation": {"reference_size": 50}}"#,
        )
        .unwrap();
        c.output_dir = dir.path().join("run");
        let err = run_experiment(&c).unwrap_err();
        let Error::Numerical { iteration, .. } = err else {
            panic!("{err:?}")
        };
        let rec = execute(&c).unwrap();
        assert!(rec.partial);
        assert!(matches!(rec.status, RunStatus::Aborted { iteration: i, .. } if i == iteration));
        let json = fs::read_to_string(c.output_dir.join(METRICS_FILE)).unwrap();
        assert!(json.contains("\"partial\": true"));
        assert!(c.output_dir.join(particle_file_name(0)).exists());
        assert!(!c.output_dir.join(particle_file_name(20)).exists());
    }
}
