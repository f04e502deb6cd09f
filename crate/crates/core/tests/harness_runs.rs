use std::fs;

use ampc_eki::harness::{compare_methods, nearest_rank, read_summary, run_experiment, ExperimentConfig, Stats};
use proptest::prelude::*;

fn linear(method: &str, repeats: usize) -> ExperimentConfig {
    ExperimentConfig::from_toml(&format!(
        "[problem]\nkind = \"linear-gaussian\"\n[method]\n{method}\n[eki]\nensemble_size = 40\n[run]\nrepeats = {repeats}\nseed = 7\n"
    ))
    .unwrap()
}

fn small_pde(method: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(&format!(
        "[problem]\nkind = \"example1\"\ngrid = 11\ndt = 0.05\nfine_factor = 1\n\
         [observation]\nsensors = 3\n[method]\n{method}\n[eki]\nensemble_size = 20\nmax_iterations = 4\n\
         [run]\nrepeats = 2\nseed = 1\n"
    ))
    .unwrap()
}

#[test]
fn pc_with_tolerance_is_rejected() {
    let text = "[problem]\nkind = \"linear-gaussian\"\n[method]\nkind = \"pc\"\ndegree = 2\ntol = 0.01\n";
    assert!(ExperimentConfig::from_toml(text).is_err());
    let text = "[problem]\nkind = \"linear-gaussian\"\n[method]\nkind = \"direct\"\n[eki]\nsize = 3\n";
    assert!(ExperimentConfig::from_toml(text).is_err());
}

#[test]
fn rerun_writes_identical_traces() {
    let cfg = linear("kind = \"ampc\"\ndegree = 1\ntol = 1e-3", 3);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_experiment(&cfg, Some(a.path())).unwrap();
    run_experiment(&cfg, Some(b.path())).unwrap();
    for r in 0..3 {
        let name = format!("trace_{r}.csv");
        let ta = fs::read(a.path().join(&name)).unwrap();
        assert!(!ta.is_empty());
        assert_eq!(ta, fs::read(b.path().join(&name)).unwrap());
        let name = format!("field_{r}.txt");
        assert_eq!(fs::read(a.path().join(&name)).unwrap(), fs::read(b.path().join(&name)).unwrap());
    }
    let s = read_summary(&a.path().join("summary.json")).unwrap();
    assert_eq!(s.completed, 3);
    assert!(fs::read_to_string(a.path().join("table.csv")).unwrap().starts_with("method,"));
}

#[test]
fn overrides_change_config() {
    let text = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/linear_gaussian.toml")).unwrap();
    let cfg = ExperimentConfig::from_toml_with(&text, &["run.repeats=2".into(), "eki.rho=0.5".into()]).unwrap();
    assert_eq!(cfg.run.repeats, 2);
    assert_eq!(cfg.eki.rho, 0.5);
    assert!(ExperimentConfig::from_toml_with(&text, &["eki.rho=0.5".into(), "eki.tau=1.5".into()]).is_err());
}

#[test]
fn reported_evaluations_match_traces() {
    let configs = [
        linear("kind = \"direct\"", 4),
        linear("kind = \"pc\"\ndegree = 2", 4),
        linear("kind = \"ampc\"\ndegree = 2\ntol = 1e-4", 4),
    ];
    let (rows, reports) = compare_methods(&configs, None).unwrap();
    assert_eq!(rows.len(), 3);
    for rep in &reports {
        assert_eq!(rep.failed, 0);
        for run in &rep.runs {
            let last = run.trace_csv.lines().last().unwrap();
            let evals: usize = last.split(',').nth(4).unwrap().parse().unwrap();
            match rep.method.as_str() {
                "direct" => {
                    assert_eq!(run.online_evals, evals);
                    assert_eq!(run.offline_evals, 0);
                }
                "pc" => {
                    assert_eq!(run.online_evals, 0);
                    assert_eq!(run.offline_evals, 2 * 15);
                }
                _ => {
                    let l = run.ledger.unwrap();
                    assert_eq!(run.offline_evals, l.offline);
                    assert_eq!(run.online_evals, run.iterations + run.refinements * l.q2);
                    let spent: usize = run.trace_csv.lines().skip(1).map(|line| line.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
                    assert_eq!(spent, run.refinements * l.q2);
                }
            }
            if let (Some(m), Some(t)) = (run.final_misfit, run.threshold) {
                if run.stop == Some(ampc_eki::eki::StopReason::Discrepancy) {
                    assert!(m <= t);
                }
            }
        }
        let mean_online = rep.runs.iter().map(|r| r.online_evals as f64).sum::<f64>() / rep.runs.len() as f64;
        assert!((rep.stats["online_evals"].mean - mean_online).abs() < 1e-9);
    }
    assert_eq!(rows[0].offline_evals, None);
    assert_eq!(rows[1].online_evals, None);
}

#[test]
fn compare_rejects_mismatched_problems() {
    let a = linear("kind = \"direct\"", 2);
    let mut b = linear("kind = \"pc\"\ndegree = 1", 2);
    b.run.seed = 8;
    assert!(compare_methods(&[a, b], None).is_err());
}

#[test]
fn small_pde_problem_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let rep = run_experiment(&small_pde("kind = \"ampc\"\ndegree = 1\ntol = 1e-2"), Some(dir.path())).unwrap();
    assert_eq!(rep.failed, 0, "{:?}", rep.runs.iter().map(|r| &r.error).collect::<Vec<_>>());
    let truth = fs::read_to_string(dir.path().join("truth_field.txt")).unwrap();
    assert!(truth.starts_with("11 11 "));
    assert_eq!(truth.lines().count(), 1 + 11);
    assert!(truth.lines().skip(1).all(|l| l.split_whitespace().count() == 11));
    for r in &rep.runs {
        assert!(r.rel.unwrap().is_finite());
        assert!(r.ledger.unwrap().identity_holds(r.offline_evals, r.iterations));
    }
}

proptest! {
    #[test]
    fn quantiles_are_ordered_samples(values in prop::collection::vec(-1e6f64..1e6, 1..60)) {
        let s = Stats::of(&values).unwrap();
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo <= s.q20 && s.q20 <= s.q80 && s.q80 <= hi);
        prop_assert!(values.contains(&s.q20) && values.contains(&s.q80));
        prop_assert!(lo <= s.mean + 1e-9 && s.mean <= hi + 1e-9);
        let below = values.iter().filter(|&&v| v <= s.q20).count();
        prop_assert!(below as f64 >= 0.2 * values.len() as f64);
        prop_assert_eq!(nearest_rank(&values, 1.0).unwrap(), hi);
    }
}
