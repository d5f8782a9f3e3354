//! Property tests for invariants that must hold on arbitrary inputs.

use polyak::auxiliary::growth_check;
use polyak::baselines::{sag_step, SagTable};
use polyak::data::{parse_libsvm, to_libsvm, Dataset, SparseVector};
use polyak::linalg;
use polyak::losses::{LossSpec, Problem};
use polyak::polyak::{
    lambda_max, momentum_step, motaps_step, sp_step, taps_step, HyperParams, Method, TargetState,
};
use polyak::trace::{TraceRecord, CSV_HEADER};
use proptest::prelude::*;

const DIM: usize = 4;

fn row() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, DIM)
}

/// `n` samples in dimension `DIM` with ±1 labels.
fn dataset(max_n: usize) -> impl Strategy<Value = Dataset> {
    prop::collection::vec((row(), any::<bool>()), 1..=max_n).prop_map(|rows| {
        let (samples, labels): (Vec<_>, Vec<_>) = rows
            .iter()
            .map(|(x, pos)| (SparseVector::from_dense(x), if *pos { 1.0 } else { -1.0 }))
            .unzip();
        Dataset::new(samples, labels, Some(DIM)).unwrap()
    })
}

fn losses() -> impl Strategy<Value = LossSpec> {
    (any::<bool>(), prop_oneof![Just(0.0), 0.001f64..0.5]).prop_map(|(logistic, sigma)| {
        if logistic {
            LossSpec::logistic(sigma)
        } else {
            LossSpec::squared(sigma)
        }
    })
}

/// Random state for `n` samples with `w`, `α` and `τ` in moderate ranges.
fn state(n: usize) -> impl Strategy<Value = TargetState> {
    (row(), prop::collection::vec(-1.0f64..2.0, n), -1.0f64..1.0).prop_map(|(w, alpha, tau)| {
        let mut s = TargetState {
            w,
            alpha,
            alpha_bar: 0.0,
            tau,
            t: 0,
        };
        s.recompute_alpha_bar();
        s
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn libsvm_text_round_trips(
        rows in prop::collection::vec(
            (prop::collection::vec((0usize..30, -1e3f64..1e3), 0..6), -5.0f64..5.0),
            1..10,
        )
    ) {
        let samples: Vec<SparseVector> = rows
            .iter()
            .map(|(entries, _)| {
                let mut e = entries.clone();
                e.sort_by_key(|p| p.0);
                e.dedup_by_key(|p| p.0);
                SparseVector::new(e).unwrap()
            })
            .collect();
        let labels = rows.iter().map(|r| r.1).collect();
        let data = Dataset::new(samples, labels, Some(30)).unwrap();
        let back = parse_libsvm(&to_libsvm(&data)).unwrap();
        prop_assert_eq!(back.samples(), data.samples());
        prop_assert_eq!(back.labels(), data.labels());
    }

    #[test]
    fn target_steps_keep_alpha_bar_consistent(
        (data, s0, picks) in dataset(8).prop_flat_map(|d| {
            let n = d.n();
            (Just(d), state(n), prop::collection::vec(0..=n, 1..60))
        }),
        spec in losses(),
        gamma in 0.05f64..1.0,
        gamma_tau in 0.0f64..1.0,
        lambda_frac in 0.0f64..1.0,
    ) {
        let p = Problem::new(&spec, &data).unwrap();
        let lambda = lambda_frac * lambda_max(data.n());
        let mut taps = s0.clone();
        let mut motaps = s0;
        for &j in &picks {
            taps_step(&mut taps, &p, j, gamma).unwrap();
            motaps_step(&mut motaps, &p, j, gamma, gamma_tau, lambda).unwrap();
        }
        prop_assert!(taps.mean_drift() <= 1e-12 * (1.0 + linalg::mean(&taps.alpha).abs()));
        prop_assert!(motaps.mean_drift() <= 1e-12 * (1.0 + linalg::mean(&motaps.alpha).abs()));
    }

    #[test]
    fn full_taps_aggregate_step_hits_the_target(
        (data, mut s) in dataset(8).prop_flat_map(|d| { let n = d.n(); (Just(d), state(n)) }),
    ) {
        let spec = LossSpec::squared(0.0);
        let p = Problem::new(&spec, &data).unwrap();
        let n = data.n();
        taps_step(&mut s, &p, n, 1.0).unwrap();
        prop_assert!((linalg::mean(&s.alpha) - s.tau).abs() <= 1e-12);
        prop_assert!((s.alpha_bar - s.tau).abs() <= 1e-12);
    }

    #[test]
    fn unit_sp_step_quarters_a_squared_residual(
        data in dataset(5),
        w in row(),
        pick in any::<prop::sample::Index>(),
    ) {
        let spec = LossSpec::squared(0.0);
        let p = Problem::new(&spec, &data).unwrap();
        let i = pick.index(data.n());
        prop_assume!(data.sq_norm(i) > 1e-6);
        let before = p.loss_i(&w, i).unwrap();
        let mut w1 = w.clone();
        sp_step(&mut w1, &p, i, 1.0, 0.0, f64::INFINITY).unwrap();
        let after = p.loss_i(&w1, i).unwrap();
        prop_assert!((after - before / 4.0).abs() <= 1e-10 * (1.0 + before));
    }

    #[test]
    fn growth_bound_holds_on_random_states(
        (data, s) in dataset(8).prop_flat_map(|d| { let n = d.n(); (Just(d), state(n)) }),
        spec in losses(),
        lambda_frac in 0.0f64..=1.0,
    ) {
        let p = Problem::new(&spec, &data).unwrap();
        let hyper = HyperParams::default().with_lambda(lambda_frac * lambda_max(data.n()));
        for method in [Method::Sp, Method::Taps, Method::Motaps] {
            let s = if method == Method::Sp {
                TargetState { alpha: Vec::new(), alpha_bar: 0.0, tau: 0.0, ..s.clone() }
            } else {
                s.clone()
            };
            let r = growth_check(method, &s, &p, &hyper).unwrap();
            prop_assert!(r.lhs <= r.rhs * (1.0 + 1e-12) + 1e-300, "{method}: {} > {}", r.lhs, r.rhs);
        }
    }

    #[test]
    fn zero_momentum_is_the_plain_step(
        w in row(),
        d in row(),
        gamma in 0.0f64..2.0,
    ) {
        let mut z = w.clone();
        let mut wm = w.clone();
        momentum_step(&mut z, &mut wm, 0.0, gamma, |z, _, eta| {
            linalg::axpy(-eta, &d, z);
            Ok(())
        })
        .unwrap();
        let mut plain = w;
        linalg::axpy(-gamma, &d, &mut plain);
        prop_assert_eq!(wm, plain);
    }

    #[test]
    fn sag_running_sum_matches_a_fresh_sum(
        (data, picks) in dataset(8).prop_flat_map(|d| {
            let n = d.n();
            (Just(d), prop::collection::vec(0..n, 1..80))
        }),
        spec in losses(),
    ) {
        let p = Problem::new(&spec, &data).unwrap();
        let mut table = SagTable::new(data.n(), DIM);
        let mut w = vec![0.0; DIM];
        for &i in &picks {
            sag_step(&mut w, &mut table, &p, i, 0.05).unwrap();
        }
        prop_assert!(table.sum_drift(&p) <= 1e-12);
    }

    #[test]
    fn csv_rows_match_the_header(
        epoch in 0usize..1000,
        values in prop::collection::vec(prop::option::of(-1e6f64..1e6), 5),
    ) {
        let r = TraceRecord {
            epoch,
            passes: epoch as f64,
            full_loss: 0.5,
            grad_norm: 0.25,
            dist_to_opt: values[0],
            aux_value: values[1],
            growth_ratio: values[2],
            tau: values[3],
            alpha_bar: values[4],
        };
        prop_assert_eq!(
            r.csv_fields().split(',').count(),
            CSV_HEADER.split(',').count()
        );
        prop_assert_eq!(r.max_field_diff(&r), Some(0.0));
    }
}
