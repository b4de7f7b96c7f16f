use dgmix::datadomains::ShiftFamilySpec;
use dgmix::harness::{
    ablation_sweep, emit_report, read_jsonl, render_markdown, run_experiment, summary_table, DatasetSpec,
    DiagEvent, GradMode, MixSet, ReportFormat, RunConfig, RunResult, SeedResult, SweepAxis, TargetResult,
    DIAG_JSONL, REPORT_MD, RESULTS_CSV, RESULTS_JSONL,
};
use dgmix::objectives::Method;
use dgmix::selection::Policy;
use dgmix::Error;

fn quick(mut cfg: RunConfig) -> RunConfig {
    if let DatasetSpec::Synthetic(s) = &mut cfg.dataset {
        s.samples_per_domain = 120;
    }
    cfg.epochs = 6;
    cfg.seeds = vec![3];
    cfg
}

#[test]
fn erm_on_matching_distribution_is_accurate() {
    let mut spec = ShiftFamilySpec::convex(vec![0.0, 0.0], vec![0.5, 0.5], 9);
    spec.noise = 0.3;
    let cfg = RunConfig {
        dataset: DatasetSpec::Synthetic(spec),
        method: Method::Erm,
        pareto: false,
        selection: Policy::TrainSplit,
        epochs: 50,
        seeds: vec![0],
        ..RunConfig::default()
    };
    let out = run_experiment(&cfg).unwrap();
    let acc = out.result.targets[0].seeds[0].selected_target_acc;
    assert!(acc >= 0.95, "{acc}");
}

#[test]
fn same_seed_same_result() {
    let cfg = quick(RunConfig { diag: true, ..RunConfig::default() });
    let a = run_experiment(&cfg).unwrap().result;
    let b = run_experiment(&cfg).unwrap().result;
    assert_eq!(a, b);
    let other = run_experiment(&RunConfig { seeds: vec![4], ..cfg }).unwrap().result;
    assert_ne!(a.targets[0].seeds[0].checkpoints, other.targets[0].seeds[0].checkpoints);
}

#[test]
fn diag_log_shows_algorithm_order() {
    let cfg = quick(RunConfig {
        diag: true,
        refresh_every: 4,
        ..RunConfig::default()
    });
    let out = run_experiment(&cfg).unwrap().result;
    let seed = &out.targets[0].seeds[0];
    match (&seed.diag[0], &seed.diag[1]) {
        (
            DiagEvent::Generated { set: MixSet::Vald, iteration: 0, .. },
            DiagEvent::Generated { set: MixSet::Optd, iteration: 0, .. },
        ) => {}
        other => panic!("{other:?}"),
    }
    let iters: Vec<usize> = seed.diag[2..]
        .iter()
        .map(|e| match e {
            DiagEvent::Refresh { iteration, theorem1_pass, .. } => {
                assert!(theorem1_pass);
                *iteration
            }
            other => panic!("{other:?}"),
        })
        .collect();
    assert_eq!(iters[0], 0);
    assert!(iters.windows(2).all(|w| w[1] - w[0] == 4));
    let total = seed.checkpoints.last().unwrap().iteration;
    assert_eq!(iters.len(), total.div_ceil(4));
}

#[test]
fn grad_modes_run() {
    for (g, m) in [
        (GradMode::BatchWhole, Method::Dann),
        (GradMode::WholeSeparate, Method::ErmPerSource),
    ] {
        let cfg = quick(RunConfig {
            grad_mode: g,
            method: m,
            ..RunConfig::default()
        });
        let out = run_experiment(&cfg).unwrap().result;
        let p = out.targets[0].seeds[0].pareto.as_ref().unwrap();
        assert_eq!(p.theorem1_failures, 0);
        assert_eq!(p.final_omega.len(), m.objective_count(3));
    }
}

#[test]
fn coral_and_fixed_lambda_paths_run() {
    for pareto in [true, false] {
        let cfg = quick(RunConfig {
            method: Method::Coral,
            pareto,
            ..RunConfig::default()
        });
        let out = run_experiment(&cfg).unwrap().result;
        assert!(out.targets[0].seeds[0].aborted.is_none());
    }
}

#[test]
fn zero_lambda_matches_erm() {
    let base = quick(RunConfig {
        pareto: false,
        method: Method::Dann,
        fixed_lambda: 0.0,
        ..RunConfig::default()
    });
    let dann = run_experiment(&base).unwrap().result;
    let erm = run_experiment(&RunConfig {
        method: Method::Erm,
        ..base
    })
    .unwrap()
    .result;
    // the discriminator does not touch the classifier path when λ = 0
    assert_eq!(
        dann.targets[0].seeds[0].checkpoints,
        erm.targets[0].seeds[0].checkpoints
    );
}

#[test]
fn config_violations_are_listed() {
    let cfg = RunConfig {
        epochs: 0,
        batch_per_domain: 1,
        ..RunConfig::default()
    };
    match run_experiment(&cfg) {
        Err(Error::ConfigViolations(v)) => assert_eq!(v.len(), 2),
        other => panic!("{:?}", other.map(|o| o.result)),
    }
}

#[test]
fn divergence_aborts_keep_last_checkpoint() {
    let cfg = quick(RunConfig {
        lr: 1e200,
        pareto: false,
        ..RunConfig::default()
    });
    let out = run_experiment(&cfg).unwrap().result;
    let s = &out.targets[0].seeds[0];
    assert!(s.aborted.is_some());
    assert!(!s.checkpoints.is_empty());
}

#[test]
fn sweeps_enumerate_rows() {
    let base = quick(RunConfig::default());
    let comp = ablation_sweep(&base, SweepAxis::Component, &[]).unwrap();
    assert_eq!(comp.rows.len(), 4 * base.seeds.len());
    let alpha = ablation_sweep(&base, SweepAxis::Alpha, &[]).unwrap();
    assert_eq!(alpha.rows.len(), 5 * base.seeds.len());
    let grad = ablation_sweep(&base, SweepAxis::GradMode, &[]).unwrap();
    assert_eq!(grad.rows.len(), 3 * base.seeds.len());
}

fn fake(variant: &str, targets: &[(&str, f64)]) -> RunResult {
    RunResult {
        variant: variant.into(),
        method: Method::Dann,
        pareto: true,
        selection: Policy::Vald,
        grad_mode: GradMode::WholeWhole,
        alpha: 0.2,
        targets: targets
            .iter()
            .map(|(name, acc)| TargetResult {
                target: name.to_string(),
                seeds: vec![SeedResult {
                    seed: 0,
                    policies: vec![],
                    selected_target_acc: *acc,
                    spearman_trainsplit: None,
                    spearman_vald: Some(0.5),
                    checkpoints: vec![],
                    loss_labels: vec![],
                    loss_curves: vec![],
                    pareto: None,
                    aborted: None,
                    diag: vec![],
                }],
            })
            .collect(),
    }
}

#[test]
fn markdown_layout_and_average() {
    let t = [("t0", 0.8), ("t1", 0.6), ("t2", 0.9), ("t3", 0.7)];
    let res = vec![fake("a", &t), fake("b", &t[..2])];
    let table = summary_table(&res);
    assert_eq!(table.rows.len(), 2);
    let md = render_markdown(&table);
    let lines: Vec<&str> = md.lines().collect();
    assert_eq!(lines.len(), 4);
    for l in &lines {
        assert_eq!(l.matches('|').count(), 7, "{l}");
    }
    let a = &table.rows[0];
    let cells: Vec<f64> = a.cells.iter().map(|c| c.unwrap()).collect();
    assert!((a.avg - cells.iter().sum::<f64>() / 4.0).abs() < 1e-9);
    assert!((table.rows[1].avg - 70.0).abs() < 1e-9);
}

#[test]
fn emitted_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick(RunConfig { diag: true, ..RunConfig::default() });
    let res = run_experiment(&cfg).unwrap().result;
    emit_report(std::slice::from_ref(&res), dir.path(), &ReportFormat::ALL).unwrap();
    for f in [RESULTS_CSV, RESULTS_JSONL, REPORT_MD, DIAG_JSONL] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let back = read_jsonl(&dir.path().join(RESULTS_JSONL)).unwrap();
    assert_eq!(back, vec![res]);
    let csv = std::fs::read_to_string(dir.path().join(RESULTS_CSV)).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3);
}

#[test]
fn empty_results_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert!(emit_report(&[], dir.path(), &ReportFormat::ALL).is_err());
}

#[test]
fn csv_dataset_runs_per_target() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dgmix::harness::case_one(1);
    let (sources, _) = dgmix::datadomains::generate_synthetic(&ShiftFamilySpec {
        samples_per_domain: 80,
        ..spec
    })
    .unwrap();
    let path = dir.path().join("data.csv");
    let schema = dgmix::datadomains::write_csv(&sources, &path).unwrap();
    let cfg = RunConfig {
        dataset: DatasetSpec::Csv(dgmix::harness::CsvDataset {
            path,
            schema,
            targets: vec!["0".into(), "2".into()],
        }),
        epochs: 3,
        seeds: vec![0],
        ..RunConfig::default()
    };
    let out = run_experiment(&cfg).unwrap().result;
    assert_eq!(out.targets.len(), 2);
    assert_eq!(out.targets[1].target, "2");
}
