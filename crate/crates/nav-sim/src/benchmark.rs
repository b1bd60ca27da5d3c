//! Seeded benchmark batches over randomly generated environments.

use crate::environment::generate_environment;
use crate::environment::Bounds;
use crate::episode::{run_episode, EpisodeOptions, OutcomeFlags, PlannerKind};
use lip_core::LipParams;
use lip_mpc::PlannerConfig;
use nalgebra::Vector2;
use rayon::prelude::*;

/// Scenario family a benchmark draws its episodes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkProtocol {
    pub n_obstacles: usize,
    pub bounds: Bounds,
    pub start: Vector2<f64>,
    pub goal: Vector2<f64>,
    pub max_steps: usize,
    pub replans_per_step: usize,
}

impl Default for BenchmarkProtocol {
    fn default() -> Self {
        Self {
            n_obstacles: 8,
            bounds: Bounds::new(Vector2::new(0.0, 0.0), Vector2::new(10.0, 10.0))
                .expect("static bounds are valid"),
            start: Vector2::new(0.0, 0.0),
            goal: Vector2::new(10.0, 10.0),
            max_steps: 100,
            replans_per_step: 8,
        }
    }
}

/// Outcome of one seeded episode. Wall time is deliberately left out so
/// rows from repeated runs compare bitwise.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRow {
    pub seed: u64,
    pub flags: OutcomeFlags,
    pub steps: usize,
    /// Set when the scenario could not be generated or simulated at all.
    pub error: Option<String>,
}

/// Episode counts aggregated over one planner's rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OutcomeCounts {
    pub episodes: usize,
    pub finish: usize,
    pub violate: usize,
    pub enter: usize,
    pub collide: usize,
    pub errors: usize,
}

impl OutcomeCounts {
    pub fn from_rows(rows: &[EpisodeRow]) -> Self {
        let mut counts = Self::default();
        for row in rows {
            counts.episodes += 1;
            counts.errors += usize::from(row.error.is_some());
            counts.finish += usize::from(row.flags.finish);
            counts.violate += usize::from(row.flags.violate);
            counts.enter += usize::from(row.flags.enter);
            counts.collide += usize::from(row.flags.collide);
        }
        counts
    }
}

/// All rows of one planner plus their aggregate counts.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannerReport {
    pub planner: PlannerKind,
    pub counts: OutcomeCounts,
    pub rows: Vec<EpisodeRow>,
}

/// One report per requested planner, in the requested order.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkTable {
    pub reports: Vec<PlannerReport>,
}

/// Runs a single seeded scenario under one planner.
///
/// Generation or simulation failures land in the row's `error` field so a
/// batch never aborts on one bad seed.
pub fn benchmark_episode(
    planner: PlannerKind,
    seed: u64,
    protocol: &BenchmarkProtocol,
    config: &PlannerConfig,
    params: &LipParams,
) -> EpisodeRow {
    let options = EpisodeOptions {
        max_steps: protocol.max_steps,
        replans_per_step: protocol.replans_per_step,
        disturbance: None,
    };
    let outcome = generate_environment(
        seed,
        protocol.n_obstacles,
        &protocol.bounds,
        protocol.start,
        protocol.goal,
        config.cbf.inflation_margin,
    )
    .and_then(|env| run_episode(&env, planner, config, params, &options));
    match outcome {
        Ok(log) => EpisodeRow {
            seed,
            flags: log.outcome,
            steps: log.steps,
            error: None,
        },
        Err(err) => EpisodeRow {
            seed,
            flags: OutcomeFlags::default(),
            steps: 0,
            error: Some(err.to_string()),
        },
    }
}

/// Runs every seed under every requested planner, in parallel over seeds.
///
/// Rows keep the order of `seeds`. Each episode is a pure function of its
/// seed, so the table is bitwise independent of the worker count.
pub fn run_benchmark(
    seeds: &[u64],
    planners: &[PlannerKind],
    protocol: &BenchmarkProtocol,
    config: &PlannerConfig,
    params: &LipParams,
) -> BenchmarkTable {
    let reports = planners
        .iter()
        .map(|&planner| {
            let rows: Vec<EpisodeRow> = seeds
                .par_iter()
                .map(|&seed| benchmark_episode(planner, seed, protocol, config, params))
                .collect();
            PlannerReport {
                planner,
                counts: OutcomeCounts::from_rows(&rows),
                rows,
            }
        })
        .collect();
    BenchmarkTable { reports }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_seed_list_yields_empty_reports() {
        let table = run_benchmark(
            &[],
            &[PlannerKind::LipMpc, PlannerKind::DdMpc],
            &BenchmarkProtocol::default(),
            &PlannerConfig::default(),
            &LipParams::default(),
        );
        assert_eq!(table.reports.len(), 2);
        for report in &table.reports {
            assert!(report.rows.is_empty());
            assert_eq!(report.counts, OutcomeCounts::default());
        }
    }

    #[test]
    fn counts_tally_flags_and_errors() {
        let rows = vec![
            EpisodeRow {
                seed: 0,
                flags: OutcomeFlags {
                    finish: true,
                    violate: false,
                    enter: true,
                    collide: false,
                },
                steps: 12,
                error: None,
            },
            EpisodeRow {
                seed: 1,
                flags: OutcomeFlags::default(),
                steps: 0,
                error: Some("bad".into()),
            },
        ];
        let counts = OutcomeCounts::from_rows(&rows);
        assert_eq!(counts.episodes, 2);
        assert_eq!(counts.finish, 1);
        assert_eq!(counts.enter, 1);
        assert_eq!(counts.collide, 0);
        assert_eq!(counts.errors, 1);
    }
}
