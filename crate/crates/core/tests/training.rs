//! Training runs end to end on small teacher-student problems.

use almdp::alm::{alm_run, AlmConfig, AlmStatus};
use almdp::baseline::{train_first_order, FirstOrderConfig, Method};
use almdp::data::{gen_teacher_student, kaiming_init, TeacherConfig};
use almdp::io::{read_trace, read_weights, write_trace, write_weights};
use almdp::net::{feasibility, mse};
use almdp::{Activation, NetworkSpec};

fn problem(seed: u64) -> (NetworkSpec, almdp::data::TeacherStudent) {
    let cfg = TeacherConfig { input_dim: 5, samples: 40, seed, ..TeacherConfig::default() };
    let ts = gen_teacher_student(&cfg).unwrap();
    let spec = NetworkSpec::with_output_activation(vec![5, 8, 4, 1], Activation::Softplus, Activation::Identity, 40, 0.1).unwrap();
    (spec, ts)
}

#[test]
fn alm_converges_on_a_small_network() {
    let (spec, ts) = problem(1);
    let init = kaiming_init(&spec, 1);
    let out = alm_run(&spec, &ts.train, &AlmConfig { timings: false, ..AlmConfig::default() }, &init).unwrap();
    assert_eq!(out.status, AlmStatus::Converged);
    let last = out.trace.last().unwrap();
    assert!(last.feas_inf <= 1e-3 && last.grad_inf <= 1e-2);
    assert_eq!(feasibility(&spec, &out.z, &ts.train).unwrap(), last.feas_inf);
    let (w, _) = out.z.unpack(&spec, &ts.train.inputs).unwrap();
    assert!(mse(&spec, &w, &ts.train).unwrap() < mse(&spec, &init, &ts.train).unwrap());
    // beta never decreases and the trace is numbered consecutively
    for (k, pair) in out.trace.windows(2).enumerate() {
        assert!(pair[1].beta >= pair[0].beta);
        assert_eq!(pair[0].k, k);
    }
    assert!(out.counts.lagrangian >= out.outer_iters() && out.gn_iters >= 1);
}

#[test]
fn alm_runs_are_reproducible() {
    let (spec, ts) = problem(2);
    let init = kaiming_init(&spec, 2);
    let cfg = AlmConfig { timings: false, ..AlmConfig::default() };
    let a = alm_run(&spec, &ts.train, &cfg, &init).unwrap();
    let b = alm_run(&spec, &ts.train, &cfg, &init).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.z, b.z);
    let mut buf = Vec::new();
    write_trace(&mut buf, &a.trace).unwrap();
    assert_eq!(read_trace(&buf[..]).unwrap(), a.trace);
}

#[test]
fn history_starts_obey_the_safeguard() {
    let (spec, ts) = problem(3);
    let init = kaiming_init(&spec, 3);
    let cfg = AlmConfig { timings: false, record_history: true, ..AlmConfig::default() };
    let out = alm_run(&spec, &ts.train, &cfg, &init).unwrap();
    assert_eq!(out.history.len(), out.outer_iters());
    let z0 = &out.history[0].start;
    for (k, rec) in out.history.iter().enumerate().skip(1) {
        let prev = &out.history[k - 1].z;
        assert!(rec.start == *prev || rec.start == *z0);
    }
}

#[test]
fn tight_tolerance_drives_feasibility_down() {
    let (spec, ts) = problem(4);
    let init = kaiming_init(&spec, 4);
    let cfg = AlmConfig { eps: 1e-7, timings: false, ..AlmConfig::default() };
    let out = alm_run(&spec, &ts.train, &cfg, &init).unwrap();
    assert_eq!(out.status, AlmStatus::Converged);
    assert!(out.trace.last().unwrap().feas_inf <= 1e-7);
    assert!(out.trace.last().unwrap().beta > out.beta0);
}

#[test]
fn baselines_and_alm_share_initialization() {
    let (spec, ts) = problem(5);
    let init = kaiming_init(&spec, 5);
    let start = mse(&spec, &init, &ts.train).unwrap();
    for method in [Method::Sgd, Method::Adam] {
        let cfg = FirstOrderConfig { method, epochs: 100, seed: 5, timings: false, ..FirstOrderConfig::default() };
        let out = train_first_order(&spec, &ts.train, Some(&ts.test), &cfg, &init).unwrap();
        assert_eq!(out.trace.len(), 100);
        assert!(out.trace.last().unwrap().train_mse < start);
        let mut buf = Vec::new();
        write_weights(&mut buf, &out.weights).unwrap();
        assert_eq!(read_weights(&buf[..]).unwrap(), out.weights);
    }
}
