use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use ripple_ageing::circuit::dc_steady_state;
use ripple_ageing::simulator::simulate;
use ripple_ageing::{
    fit_circuit_params, CellParams, FitParam, IdentOptions, LoadProfile, MeasuredTrace,
};

fn clean_trace(p: &CellParams, duration: f64) -> MeasuredTrace {
    let profile = LoadProfile::sine(5.0, 5.0, 1e4);
    let sim = simulate(
        &profile,
        p,
        0.2e-6,
        duration,
        dc_steady_state(10.0, p).unwrap(),
    )
    .unwrap();
    MeasuredTrace::from_simulation(&sim).unwrap()
}

fn perturbed(p: &CellParams, params: &[FitParam]) -> CellParams {
    let mut start = *p;
    for (k, q) in params.iter().enumerate() {
        q.set(&mut start, q.get(p) * if k % 2 == 0 { 1.2 } else { 0.8 });
    }
    start
}

#[test]
fn starting_at_the_truth_converges_immediately() {
    let p = CellParams::default();
    let trace = clean_trace(&p, 2e-3);
    let opts = IdentOptions {
        warm_start_current: Some(10.0),
        ..Default::default()
    };
    let fit = fit_circuit_params(&trace, &p, &opts).unwrap();
    assert!(fit.converged);
    assert!(fit.rmse_voltage < 1e-6, "{}", fit.rmse_voltage);
    for q in FitParam::ALL {
        assert!((q.get(&fit.params) / q.get(&p) - 1.0).abs() < 1e-3, "{q}");
    }
}

#[test]
fn noisy_trace_fits_to_the_noise_floor() {
    let p = CellParams::default();
    let clean = clean_trace(&p, 4e-3);
    let mut rng = rand::rngs::StdRng::seed_from_u64(7);
    let noise = Normal::new(0.0, 1e-3).unwrap();
    let noisy: Vec<f64> = clean
        .voltage()
        .iter()
        .map(|v| v + noise.sample(&mut rng))
        .collect();
    let floor = (noisy
        .iter()
        .zip(clean.voltage())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / noisy.len() as f64)
        .sqrt();
    let trace = MeasuredTrace::new(clean.time().to_vec(), clean.current().to_vec(), noisy).unwrap();

    let free = vec![
        FitParam::R0,
        FitParam::RSei,
        FitParam::CSei,
        FitParam::CDl,
        FitParam::Rw2,
        FitParam::ExchangeCurrent,
    ];
    let opts = IdentOptions {
        free: free.clone(),
        warm_start_current: Some(10.0),
        ..Default::default()
    };
    let fit = fit_circuit_params(&trace, &perturbed(&p, &free), &opts).unwrap();
    assert!(
        fit.rmse_voltage <= 1.2 * floor,
        "rmse {} floor {}",
        fit.rmse_voltage,
        floor
    );
    assert!(fit.objective_history.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn exhausted_budget_reports_best_so_far() {
    let p = CellParams::default();
    let trace = clean_trace(&p, 1e-3);
    let free = vec![FitParam::R0, FitParam::RSei, FitParam::CDl];
    let start = perturbed(&p, &free);
    let opts = IdentOptions {
        free: free.clone(),
        warm_start_current: Some(10.0),
        max_evaluations: 10,
        polish_iterations: 0,
        ..Default::default()
    };
    let fit = fit_circuit_params(&trace, &start, &opts).unwrap();
    assert!(!fit.converged);
    assert!(fit.evaluations <= 10);
    let first = *fit.objective_history.first().unwrap();
    assert!(fit.rmse_voltage <= first);
    assert!(fit.objective_history.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn identified_values_stay_within_bounds() {
    use ripple_ageing::regression::ParamBounds;
    let p = CellParams::default();
    let trace = clean_trace(&p, 1e-3);
    let start = CellParams { r0: 0.06, ..p };
    let opts = IdentOptions {
        free: vec![FitParam::R0],
        bounds: vec![ParamBounds {
            param: FitParam::R0,
            lower: 0.05,
            upper: 0.07,
        }],
        warm_start_current: Some(10.0),
        ..Default::default()
    };
    let fit = fit_circuit_params(&trace, &start, &opts).unwrap();
    assert!(fit.params.r0 <= 0.07 && fit.params.r0 >= 0.05);
    assert_eq!(fit.bounds_hit, vec![FitParam::R0]);
}
