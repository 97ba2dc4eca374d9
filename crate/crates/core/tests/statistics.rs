//! Statistical properties of the measurement harness.

use qlab::estimators::{garl_plugin, EstimatorTag};
use qlab::lab::{ess_profile, fit_bias_law, measure_bias_variance, LabOptions};
use qlab::models::{exact_grad_loss, sample_prior, Example, LatentDims, LatentSeqModel, Model};
use qlab::rng::Stream;
use qlab::trainer::make_cold_task;
use qlab::QParam;

fn q(v: f64) -> QParam {
    QParam::new(v).unwrap()
}

fn setup() -> (LatentSeqModel, Example) {
    let d = LatentDims {
        n_inputs: 1,
        latent_vocab: 2,
        latent_len: 2,
        output_vocab: 2,
        output_len: 2,
    };
    (
        LatentSeqModel::random(d, 1.0, &mut Stream::new(41)).unwrap(),
        Example::new(0, vec![1, 0]),
    )
}

#[test]
fn ci_calibration_smoke() {
    let (model, ex) = setup();
    let opts = LabOptions {
        replicates: 400,
        bootstrap: 200,
        ..LabOptions::default()
    };
    let covered = (0..100)
        .filter(|&i| {
            let r = measure_bias_variance(
                &model,
                &ex,
                EstimatorTag::Plugin,
                QParam::ZERO,
                4,
                &opts,
                1000 + i,
            )
            .unwrap();
            r.flags.iter().find(|f| f.name == "unbiased").unwrap().pass
        })
        .count();
    // 95% nominal, binomial slack down to 90 of 100
    assert!(
        covered >= 90,
        "{covered} of 100 intervals cover the exact gradient"
    );
}

#[test]
fn reports_are_byte_reproducible() {
    let (model, ex) = setup();
    let opts = LabOptions {
        replicates: 300,
        bootstrap: 100,
        ..LabOptions::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let meta = qlab::csvio::CsvMeta::new("r", "c");
    let paths: Vec<_> = (0..2)
        .map(|i| {
            let r = measure_bias_variance(&model, &ex, EstimatorTag::Rloo, q(0.5), 8, &opts, 77)
                .unwrap();
            let p = dir.path().join(format!("r{i}.csv"));
            r.write_csv(&p, &meta).unwrap();
            p
        })
        .collect();
    assert_eq!(
        std::fs::read(&paths[0]).unwrap(),
        std::fs::read(&paths[1]).unwrap()
    );
}

#[test]
fn bias_at_m64_matches_prediction_with_second_order_allowance() {
    let (model, ex) = setup();
    let opts = LabOptions {
        replicates: 20_000,
        bootstrap: 300,
        ..LabOptions::default()
    };
    let reports: Vec<_> = [16, 32, 64]
        .iter()
        .map(|&m| {
            measure_bias_variance(
                &model,
                &ex,
                EstimatorTag::Plugin,
                q(0.5),
                m,
                &opts,
                5 + m as u64,
            )
            .unwrap()
        })
        .collect();
    let fit = fit_bias_law(&reports).unwrap();
    let r64 = &reports[2];
    let bias = r64.bias();
    for (i, b) in bias.iter().enumerate() {
        let allowance = fit.b[i].abs() / (64.0 * 64.0);
        let gap = (b - r64.predicted_bias[i]).abs();
        assert!(
            gap < 3.0 * r64.ci_half[i] + allowance,
            "coord {i}: gap {gap:e}, ci {:e}",
            r64.ci_half[i]
        );
    }
}

#[test]
fn plugin_is_consistent_in_m() {
    let (model, ex) = setup();
    let exact = exact_grad_loss(&model, &ex, q(0.5)).unwrap().values;
    let pools = 20;
    let mut errors = Vec::new();
    let mut last = (vec![], vec![]);
    for (j, &m) in [100usize, 1_000, 10_000, 100_000].iter().enumerate() {
        let ests: Vec<Vec<f64>> = (0..pools)
            .map(|r| {
                let mut s = Stream::derive(9, "consistency", (j * pools + r) as u64);
                garl_plugin(&sample_prior(&model, &ex, m, &mut s).unwrap(), q(0.5))
                    .unwrap()
                    .values()
                    .to_vec()
            })
            .collect();
        let n = exact.len();
        let mean: Vec<f64> = (0..n)
            .map(|i| ests.iter().map(|e| e[i]).sum::<f64>() / pools as f64)
            .collect();
        let rms: f64 = ests
            .iter()
            .map(|e| {
                e.iter()
                    .zip(&exact)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
            })
            .sum::<f64>()
            / pools as f64;
        errors.push(rms.sqrt());
        let se: Vec<f64> = (0..n)
            .map(|i| {
                let v =
                    ests.iter().map(|e| (e[i] - mean[i]).powi(2)).sum::<f64>() / (pools - 1) as f64;
                (v / pools as f64).sqrt()
            })
            .collect();
        last = (mean, se);
    }
    assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
    let (mean, se) = last;
    for i in 0..exact.len() {
        assert!(
            (mean[i] - exact[i]).abs() <= 3.0 * se[i] + 1e-12,
            "coord {i}"
        );
    }
}

#[test]
fn cold_task_ess_is_reported() {
    // the cold task lowers every rationale together, so its weights stay
    // comparable and ESS sits near M rather than near 1
    let task = make_cold_task(1e-4, 3).unwrap();
    let prof = ess_profile(&task.model, &task.dataset[0], 8, 2000, 11).unwrap();
    let median = prof.median();
    println!("cold task median ESS at M = 8: {median:.3}");
    assert!((1.0..=8.0).contains(&median));
    assert_eq!(prof.ess.len() + prof.degenerate, 2000);
}

#[test]
fn ess_collapses_when_one_rationale_carries_the_likelihood() {
    let d = LatentDims {
        n_inputs: 1,
        latent_vocab: 4,
        latent_len: 3,
        output_vocab: 4,
        output_len: 2,
    };
    let mut model = LatentSeqModel::random(d, 8.0, &mut Stream::new(5)).unwrap();
    let prior = model.prior_range();
    model.params_mut()[prior].iter_mut().for_each(|v| *v = 0.0);
    let prof = ess_profile(&model, &Example::new(0, vec![1, 2]), 8, 2000, 1).unwrap();
    assert!(prof.median() < 1.5, "median ESS {}", prof.median());
}
