mod support;

use spalps_core::meanfield::{evaluate, evaluate_equations, EquationSystem};
use spalps_core::{collapse_ticks, compare, ensemble, simulate_once, EnsembleStats, Phase, RunConfig, Trajectory};
use support::*;

#[test]
fn json_export_reproduces_the_trajectory_bit_for_bit() {
    for name in ["ring", "dengue"] {
        let c = compile(&corpus(name));
        let reloaded = EquationSystem::from_json(&c.eqs.to_json()).expect("round trip");
        assert_eq!(reloaded, c.eqs);
        let a = evaluate_equations(&c.eqs, 40);
        let b = evaluate_equations(&reloaded, 40);
        assert_eq!(a.frames.len(), b.frames.len());
        for (x, y) in a.frames.iter().zip(&b.frames) {
            assert_eq!(x.phase, y.phase);
            let bits = |v: &[f64]| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&x.values), bits(&y.values), "{name} frame {}", x.step);
        }
    }
}

#[test]
fn table_and_equations_evaluate_identically() {
    let c = compile(&corpus("ring"));
    let direct = evaluate(&c.table, &c.init, 30).unwrap();
    assert_eq!(direct, evaluate_equations(&c.eqs, 30));
}

#[test]
fn trajectory_csv_round_trips() {
    let c = compile(&corpus("dengue"));
    let traj = evaluate_equations(&c.eqs, 12);
    let mut buf = Vec::new();
    traj.write_csv(&mut buf).unwrap();
    let back = Trajectory::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back.phases(), traj.phases());
    for (x, y) in back.frames.iter().zip(&traj.frames) {
        assert_eq!(x.values, y.values);
    }
    let header = String::from_utf8(buf).unwrap();
    assert!(header.starts_with("step,phase,state,location,value\n"));
}

#[test]
fn ensemble_csv_round_trips() {
    let c = compile(&corpus("ring"));
    let config = RunConfig {
        seed: 3,
        steps: 10,
        replicas: 20,
        scale: 5,
    };
    let stats = ensemble(&c.model, &c.space, &config).unwrap();
    let mut buf = Vec::new();
    stats.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("step,phase,state,location,replica_mean,replica_std,replicas\n"));
    assert_eq!(EnsembleStats::read_csv(buf.as_slice()).unwrap(), stats);
}

#[test]
fn tick_collapse_keeps_post_tick_frames() {
    let c = compile(&corpus("ring"));
    let traj = evaluate_equations(&c.eqs, 10);
    let collapsed = collapse_ticks(&traj);
    let steps: Vec<usize> = collapsed.frames.iter().map(|f| f.step).collect();
    assert_eq!(steps, [0, 1, 2, 3, 4]);
    for (kept, original) in collapsed.frames.iter().zip([0, 3, 5, 8, 10]) {
        assert_eq!(kept.values, traj.frames[original].values);
    }
}

#[test]
fn oracle_phases_follow_mean_field_on_the_ring() {
    let c = compile(&corpus("ring"));
    let mf = evaluate_equations(&c.eqs, 25);
    let run = simulate_once(
        &c.model,
        &c.space,
        &RunConfig {
            seed: 11,
            steps: 25,
            replicas: 1,
            scale: 1,
        },
    )
    .unwrap();
    let phases: Vec<Phase> = run.frames.iter().map(|f| f.phase).collect();
    assert_eq!(phases, mf.phases());
}

#[test]
fn ensemble_mean_after_one_cycle_matches_growth() {
    let c = compile(&corpus("ring"));
    let config = RunConfig {
        seed: 5,
        steps: 5,
        replicas: 2000,
        scale: 100,
    };
    let stats = ensemble(&c.model, &c.space, &config).unwrap();
    let totals: Vec<f64> = (0..config.replicas as u64)
        .map(|r| {
            let sim = spalps_core::oracle::Simulator::new(&c.model, &c.space).unwrap();
            sim.run(&config, r).unwrap().total(5) as f64
        })
        .collect();
    let mean = stats.frames[5].mean.iter().sum::<f64>();
    let var = totals.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (totals.len() - 1) as f64;
    let se = (var / totals.len() as f64).sqrt();
    assert!((mean - 750.0).abs() < 3.0 * se, "mean {mean}, se {se}");
}

#[test]
fn matching_is_unbiased_across_competing_senders() {
    let src = "species a {
    process A = out c . tick . A;
    process B = out c . tick . B;
    process R = in c . tick . R;
}
habitat ring(1);
system { A @ 1 * 2; B @ 1 * 2; R @ 1 * 2; } restrict { c }
";
    let c = compile(src);
    let sent = c.table.terms.iter().position(|t| t == "tick . A").unwrap();
    let config = RunConfig {
        seed: 17,
        steps: 1,
        replicas: 4000,
        scale: 1,
    };
    let stats = ensemble(&c.model, &c.space, &config).unwrap();
    assert_eq!(stats.frames[1].phase, Some(Phase::Action));
    let mean = stats.frames[1].mean[sent];
    let se = stats.frames[1].std[sent] / (config.replicas as f64).sqrt();
    assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean}, se {se}");
    let mf = evaluate_equations(&c.eqs, 1);
    assert_eq!(mf.get(1, sent, 0), 1.0);
}

#[test]
fn compare_against_itself_is_exact() {
    let c = compile(&corpus("ring"));
    let mf = evaluate_equations(&c.eqs, 15);
    let report = compare(&mf, &spalps_core::oracle::as_ensemble(&mf)).unwrap();
    assert_eq!(report.max_error, 0.0);
    assert!(report.misaligned.is_empty());
    assert_eq!(report.errors.len(), 16);
}
