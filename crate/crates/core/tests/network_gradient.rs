//! Gradient of the mean day loss with respect to the network weights: the
//! loss gradient in forecast space pulled back through the network, checked
//! against central differences on the weights.

use nalgebra::DMatrix;
use valcast::cases;
use valcast::clearing::Market;
use valcast::data::{from_nodal, generate, loads_for, to_nodal, Dataset, SynthConfig};
use valcast::forecaster::{predict, Params, ResNet};
use valcast::loss::{evaluate, PolicyBuffer};

const STEP: f64 = 1e-6;

fn inputs(data: &Dataset, d: usize) -> DMatrix<f64> {
    let f = &data.days[d].features;
    DMatrix::from_fn(f[0].len(), f.len(), |i, t| f[t][i])
}

/// Mean loss over the days and the digest of every day's signature chain.
fn mean_loss(model: &ResNet, data: &Dataset, market: &Market) -> (f64, Vec<u64>) {
    let inst = market.instance();
    let buffer = PolicyBuffer::new();
    let forecasts = predict(model, data).unwrap();
    let mut total = 0.0;
    let mut chains = Vec::new();
    for (day, f) in data.days.iter().zip(&forecasts) {
        let e = evaluate(
            market,
            loads_for(inst, day.label),
            &to_nodal(inst, f),
            &to_nodal(inst, &day.actual),
            &buffer,
        )
        .unwrap();
        total += e.value;
        chains.push(e.chain_digest());
    }
    (total / data.len() as f64, chains)
}

fn analytic(model: &ResNet, data: &Dataset, market: &Market) -> Params {
    let inst = market.instance();
    let buffer = PolicyBuffer::new();
    let mut acc = model.params.zeros_like();
    for (d, day) in data.days.iter().enumerate() {
        let (out, cache) = model.forward(&inputs(data, d), &data.caps).unwrap();
        let forecast: Vec<Vec<f64>> = (0..out.ncols())
            .map(|t| out.column(t).iter().copied().collect())
            .collect();
        let e = evaluate(
            market,
            loads_for(inst, day.label),
            &to_nodal(inst, &forecast),
            &to_nodal(inst, &day.actual),
            &buffer,
        )
        .unwrap();
        let g = from_nodal(inst, &e.gradient);
        let upstream = DMatrix::from_fn(out.nrows(), out.ncols(), |f, t| g[t][f]);
        acc.axpy(
            1.0 / data.len() as f64,
            &model.backward(&cache, &upstream).unwrap(),
        );
    }
    acc
}

#[test]
fn weight_gradient_matches_central_differences() {
    let market = Market::new(cases::iso1());
    let (data, _) = generate(&SynthConfig::default(), 4).unwrap();
    let model = ResNet::for_dataset(&data, 5, 17);
    let grad = analytic(&model, &data, &market).flatten();
    let (_, base_chain) = mean_loss(&model, &data, &market);

    let mut checked = 0;
    let mut worst = 0.0f64;
    let mut offset = 0;
    for block in 0..8 {
        let len = model.params.slices()[block].len();
        for i in 0..len {
            let shifted = |h: f64| {
                let mut m = model.clone();
                m.params.slices_mut()[block][i] += h;
                mean_loss(&m, &data, &market)
            };
            let (plus, cp) = shifted(STEP);
            let (minus, cm) = shifted(-STEP);
            if cp != base_chain || cm != base_chain {
                continue;
            }
            let fd = (plus - minus) / (2.0 * STEP);
            let a = grad[offset + i];
            let err = (a - fd).abs() / (fd.abs().max(a.abs()) + 1e-3);
            worst = worst.max(err);
            checked += 1;
        }
        offset += len;
    }
    assert!(
        checked >= grad.len() * 3 / 4,
        "only {checked} of {} weights away from boundaries",
        grad.len()
    );
    assert!(worst <= 1e-3, "worst relative error {worst:.3e}");
}
