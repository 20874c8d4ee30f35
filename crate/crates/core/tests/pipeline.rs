use std::fs;

use cran_core::harness::{
    emit_results, run_experiment, ExperimentKind, ExperimentPlan, MethodTag, ScenarioConfig, DETERMINISTIC_FILES,
};

fn scenario() -> ScenarioConfig {
    let mut s = ScenarioConfig::default();
    s.system = s.system.with_devices(4);
    s
}

#[test]
fn emitted_files_do_not_depend_on_threads() {
    let mut plan = ExperimentPlan::new(ExperimentKind::PowerVsN, scenario(), 3, 5);
    plan.sweep = vec![16.0, 32.0];
    let a = run_experiment(&plan, 1, None).unwrap();
    let b = run_experiment(&plan, 3, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (da, db) = (dir.path().join("a"), dir.path().join("b"));
    emit_results(&a, &da).unwrap();
    emit_results(&b, &db).unwrap();
    let mut compared = 0;
    for name in DETERMINISTIC_FILES {
        let (x, y) = (fs::read(da.join(name)), fs::read(db.join(name)));
        if let (Ok(x), Ok(y)) = (x, y) {
            assert_eq!(x, y, "{name}");
            compared += 1;
        }
    }
    assert!(compared >= 3);
    assert!(da.join("timing.csv").exists());
}

#[test]
fn sweep_rows_cover_every_point_trial_and_method() {
    let mut plan = ExperimentPlan::new(ExperimentKind::PowerVsN, scenario(), 2, 9);
    plan.sweep = vec![16.0, 64.0];
    let res = run_experiment(&plan, 0, None).unwrap();
    assert_eq!(res.rows.len(), 2 * 2 * plan.methods.len());
    for r in res.rows.iter().filter(|r| r.method == MethodTag::Joint) {
        assert!(r.feasible, "{}", r.status);
        let p = r.total_power.unwrap();
        assert!((p - r.power.iter().sum::<f64>()).abs() <= 1e-12 * p);
        assert!(r.worst_latency_excess.unwrap() <= 1e-6);
    }
    // Trial seeds are shared across sweep points.
    let seeds: Vec<_> = res.rows.iter().filter(|r| r.method == MethodTag::Joint).map(|r| (r.trial, r.seed)).collect();
    assert_eq!(seeds[0], seeds[2]);
}

#[test]
fn profile_orders_resources_by_channel_and_task() {
    let plan = ExperimentPlan::new(ExperimentKind::PerDeviceProfile, scenario(), 3, 21);
    let res = run_experiment(&plan, 0, None).unwrap();
    assert_eq!(res.profile.len(), 3 * 4);
    for row in &res.profile {
        assert!(row.latency <= row.deadline * (1.0 + 1e-6));
        assert!(row.cpu_share > 0.0 && row.cpu_share <= 1.0);
    }
    let d = res.summary.dominance.as_ref().unwrap();
    assert!(d.power_violations <= d.pairs && d.cpu_violations <= d.pairs);
}
