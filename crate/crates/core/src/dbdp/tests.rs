use super::*;
use crate::lowdisc::NormalBatch;
use crate::net::Parameters;
use crate::problems::ProblemKind;
use ndarray::array;

fn hjb(d: usize) -> ProblemSpec {
    ProblemSpec::new(ProblemKind::Hjb, d, 1.0).unwrap()
}

fn heat(d: usize, horizon: f64) -> ProblemSpec {
    ProblemSpec::new(ProblemKind::Heat, d, horizon).unwrap()
}

fn small_config(batch_norm: bool) -> NetworkConfig {
    NetworkConfig {
        width: Some(6),
        depth: 3,
        batch_norm,
        param_bound: None,
    }
}

fn tiny_schedule(first: u64, rest: u64, batch: usize) -> TrainingSchedule {
    TrainingSchedule {
        iterations_first: first,
        iterations_rest: rest,
        halve_every_first: 100,
        halve_every_rest: 100,
        batch_size: batch,
        ..TrainingSchedule::default()
    }
}

#[test]
fn f_function_examples() {
    let p = hjb(3);
    let x = [0.1, 0.2, 0.3];
    assert_eq!(f_function(&p, 0.0, &x, 0.7, &[0.0; 3], 0.1, &[0.0; 3]), 0.7);
    let v = f_function(&p, 0.0, &x, 1.0, &[1.0, 0.0, 0.0], 0.1, &[0.2, 0.0, 0.0]);
    assert!((v - 1.25).abs() < 1e-15);
    let z = [0.3, -0.2, 0.5];
    let (dw1, dw2) = ([0.1, 0.2, -0.3], [0.5, -0.1, 0.25]);
    let sum: Vec<f64> = dw1.iter().zip(&dw2).map(|(a, b)| a + b).collect();
    let diff = f_function(&p, 0.0, &x, 0.4, &z, 0.1, &sum) - f_function(&p, 0.0, &x, 0.4, &z, 0.1, &dw1);
    let zdw2: f64 = z.iter().zip(&dw2).map(|(a, b)| a * b).sum();
    assert!((diff - zdw2).abs() < 1e-15);
}

fn zero_nets(d: usize) -> StepNetworks {
    let (su, sz) = small_config(false).specs(d).unwrap();
    StepNetworks::new(
        Mlp::new(Parameters::zeros(&su), None).unwrap(),
        Mlp::new(Parameters::zeros(&sz), None).unwrap(),
    )
    .unwrap()
}

fn slice_for(problem: &ProblemSpec, seed: u64, m: usize, t: f64, dt: f64) -> PathSlice {
    let normals = McSampler::new(seed).normals(0, 0, m, 3 * problem.d).unwrap();
    simulate_slice(problem, &normals, t, dt).unwrap()
}

#[test]
fn zero_everything_gives_zero_loss() {
    let p = hjb(2);
    let mut nets = zero_nets(2);
    let frozen = zero_nets(2).u;
    let slice = slice_for(&p, 3, 16, 0.25, 0.25);
    let out = step_loss(&p, NextValue::Network(&frozen), &mut nets, &slice, 0.25, 0.25).unwrap();
    assert_eq!(out.loss, 0.0);
    assert_eq!(out.grad_u.max_abs(), 0.0);
}

#[test]
fn single_sample_loss_by_hand() {
    // heat, d = 1, T = 1, mu = 0.2, sigma = 1, t = 0.5, h = 0.5, y = 0.3,
    // z = 0.4, dW = 0.1, x = 0.2, target g(x') = cos(x').
    let p = ProblemSpec::with_coefficients(ProblemKind::Heat, 1, 1.0, -0.5, 0.5, 0.2, 1.0).unwrap();
    let slice = PathSlice {
        eta: array![[0.0]],
        x_i: array![[0.2]],
        x_next: array![[0.4]],
        dw: array![[0.1]],
    };
    let e1 = 0.25f64.exp();
    let e2 = 0.5f64.exp();
    let f = (0.2f64.cos() + 0.2 * 0.2f64.sin()) * e1 - 0.5 * (0.2f64.sin() * 0.2f64.cos() * e2).powi(2)
        + 0.5 * (0.3f64 * 0.4).powi(2);
    let h = 0.4f64.cos() - (0.3 - f * 0.5 + 0.4 * 0.1);
    let out = loss_from_outputs(&p, &slice, 0.5, 0.5, &[0.4f64.cos()], &[0.3], array![[0.4]].view()).unwrap();
    assert!((out.loss - h * h).abs() < 1e-15);
}

#[test]
fn loss_at_exact_solution_shrinks_with_dt() {
    let p = heat(2, 1.0);
    let t = 0.25;
    let m = 1 << 14;
    let normals = McSampler::new(17).normals(0, 0, m, 6).unwrap();
    let loss_at = |dt: f64| {
        let slice = simulate_slice(&p, &normals, t, dt).unwrap();
        let rows = |x: &Array2<f64>, time: f64| -> Vec<f64> {
            x.rows().into_iter().map(|r| p.exact_solution(time, r.as_slice().unwrap()).unwrap()).collect()
        };
        let target = rows(&slice.x_next, t + dt);
        let y = rows(&slice.x_i, t);
        let mut z = Array2::zeros((m, 2));
        for (k, r) in slice.x_i.rows().into_iter().enumerate() {
            let zk = p.exact_z(t, r.as_slice().unwrap()).unwrap();
            z.row_mut(k).assign(&ndarray::ArrayView1::from(&zk));
        }
        loss_from_outputs(&p, &slice, t, dt, &target, &y, z.view()).unwrap().loss
    };
    let (coarse, fine) = (loss_at(0.2), loss_at(0.1));
    assert!(fine <= 0.75 * coarse, "{fine} vs {coarse}");
}

#[test]
fn gradient_ignores_the_frozen_target() {
    let p = heat(2, 1.0);
    let config = small_config(false);
    let frozen = StepNetworks::xavier(2, &config, 1).unwrap().u;
    let before = frozen.clone();
    let mut nets = StepNetworks::xavier(2, &config, 2).unwrap();
    let slice = slice_for(&p, 4, 32, 0.5, 0.5);
    let out = step_loss(&p, NextValue::Network(&frozen), &mut nets, &slice, 0.5, 0.5).unwrap();
    assert_eq!(frozen, before);
    // Central differences of the loss in U_i's parameters.
    let h = 1e-6;
    for k in [0, 3, 7, nets.u.params().len() - 1] {
        let mut plus = nets.clone();
        plus.u.params_mut().as_mut_slice()[k] += h;
        let mut minus = nets.clone();
        minus.u.params_mut().as_mut_slice()[k] -= h;
        let lp = step_loss_value(&p, NextValue::Network(&frozen), &plus, &slice, 0.5, 0.5).unwrap();
        let lm = step_loss_value(&p, NextValue::Network(&frozen), &minus, &slice, 0.5, 0.5).unwrap();
        let numeric = (lp - lm) / (2.0 * h);
        assert!((numeric - out.grad_u.params[k]).abs() < 1e-7, "param {k}");
    }
    for k in [0, nets.z.params().len() - 1] {
        let mut plus = nets.clone();
        plus.z.params_mut().as_mut_slice()[k] += h;
        let mut minus = nets.clone();
        minus.z.params_mut().as_mut_slice()[k] -= h;
        let lp = step_loss_value(&p, NextValue::Network(&frozen), &plus, &slice, 0.5, 0.5).unwrap();
        let lm = step_loss_value(&p, NextValue::Network(&frozen), &minus, &slice, 0.5, 0.5).unwrap();
        assert!(((lp - lm) / (2.0 * h) - out.grad_z.params[k]).abs() < 1e-7);
    }
}

#[test]
fn zero_iterations_return_the_initialization() {
    let p = heat(2, 1.0);
    let grid = TimeGrid::uniform(1.0, 2).unwrap();
    let init = StepNetworks::xavier(2, &small_config(true), 9).unwrap();
    let mut sampler = McSampler::new(1);
    let (nets, record) = train_step(
        &p,
        &grid,
        1,
        NextValue::Terminal,
        init.clone(),
        &tiny_schedule(0, 0, 8),
        None,
        &mut sampler,
    )
    .unwrap();
    assert_eq!(nets, init);
    assert_eq!(record.iterations, 0);
}

#[test]
fn training_makes_progress() {
    let p = heat(2, 1.0);
    let grid = TimeGrid::uniform(1.0, 2).unwrap();
    let init = StepNetworks::xavier(2, &NetworkConfig::default(), 3).unwrap();
    let mut sampler = McSampler::new(5);
    let schedule = TrainingSchedule {
        iterations_first: 2000,
        halve_every_first: 500,
        batch_size: 1 << 10,
        ..TrainingSchedule::default()
    };
    let (_, record) = train_step(&p, &grid, 1, NextValue::Terminal, init, &schedule, None, &mut sampler).unwrap();
    assert!(
        record.final_loss < 0.1 * record.initial_loss,
        "{} -> {}",
        record.initial_loss,
        record.final_loss
    );
}

#[test]
fn non_finite_loss_aborts_with_location() {
    let p = heat(1, 1.0);
    let grid = TimeGrid::uniform(1.0, 1).unwrap();
    let mut nets = zero_nets(1);
    nets.u.params_mut().as_mut_slice().iter_mut().for_each(|v| *v = f64::NAN);
    let err = train_step(
        &p,
        &grid,
        0,
        NextValue::Terminal,
        nets,
        &tiny_schedule(3, 3, 4),
        None,
        &mut McSampler::new(0),
    )
    .unwrap_err();
    assert!(matches!(err, Error::TrainingAbort { step: 0, iteration: 0, .. }), "{err}");
}

/// Records every request and forwards it to an inner sampler.
struct Spy {
    inner: Box<dyn BatchSampler + Send>,
    calls: Vec<(usize, u64, usize, usize)>,
}

impl BatchSampler for Spy {
    fn kind(&self) -> SamplerKind {
        self.inner.kind()
    }

    fn normals(&mut self, step: usize, iteration: u64, m: usize, s: usize) -> Result<NormalBatch> {
        self.calls.push((step, iteration, m, s));
        self.inner.normals(step, iteration, m, s)
    }
}

fn tiny_settings(kind: SamplerKind) -> SolverSettings {
    SolverSettings {
        schedule: tiny_schedule(6, 4, 32),
        network: small_config(true),
        sampler: kind,
        scramble: ScrambleMode::OwenNested,
    }
}

#[test]
fn samplers_share_the_training_path_and_run_backwards() {
    let p = heat(2, 1.0);
    let grid = TimeGrid::uniform(1.0, 3).unwrap();
    for kind in [SamplerKind::Mc, SamplerKind::Rqmc] {
        let settings = tiny_settings(kind);
        let mut spy = Spy {
            inner: make_sampler(kind, ScrambleMode::OwenNested, derive_seed(7, &[tag::SAMPLER])),
            calls: Vec::new(),
        };
        let spied = solve_with_sampler(&p, &grid, &settings, &mut spy, 7).unwrap();
        let expected: Vec<(usize, u64, usize, usize)> = [(2usize, 6u64), (1, 4), (0, 4)]
            .iter()
            .flat_map(|&(step, n)| (0..n).map(move |it| (step, it, 32, 6)))
            .collect();
        assert_eq!(spy.calls, expected);
        let direct = solve(&p, &grid, &settings, 7).unwrap();
        assert_eq!(spied, direct);
        assert_eq!(direct.records.len(), 3);
        assert_eq!(direct.records.iter().map(|r| r.step).collect::<Vec<_>>(), vec![0, 1, 2]);
    }
}

#[test]
fn solve_is_deterministic_and_seed_sensitive() {
    let p = heat(2, 1.0);
    let grid = TimeGrid::uniform(1.0, 2).unwrap();
    let settings = tiny_settings(SamplerKind::Rqmc);
    let a = solve(&p, &grid, &settings, 11).unwrap();
    let b = solve(&p, &grid, &settings, 11).unwrap();
    let c = solve(&p, &grid, &settings, 12).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.steps[0], c.steps[0]);
}

#[test]
fn solve_rejects_mismatched_grid() {
    let p = heat(2, 1.0);
    let grid = TimeGrid::uniform(0.5, 2).unwrap();
    assert!(matches!(solve(&p, &grid, &tiny_settings(SamplerKind::Mc), 0), Err(Error::Config(_))));
}

#[test]
fn save_and_load_round_trip() {
    let p = heat(2, 1.0);
    let grid = TimeGrid::uniform(1.0, 2).unwrap();
    let sol = solve(&p, &grid, &tiny_settings(SamplerKind::Mc), 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    sol.save(dir.path()).unwrap();
    assert!(dir.path().join("step_001_z.ckpt").exists());
    let back = TrainedSolution::load(dir.path()).unwrap();
    assert_eq!(back, sol);
    std::fs::remove_file(dir.path().join("step_000_u.ckpt")).unwrap();
    assert!(TrainedSolution::load(dir.path()).is_err());
}
