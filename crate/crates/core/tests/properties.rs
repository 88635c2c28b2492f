use densify_core::controller::{
    apply_densify, cadam_select, decide_actions, prune, selective_opacity_reset,
    ControllerConfig,
};
use densify_core::harness::{mask_area_fraction, mask_image};
use densify_core::io::{decode_snapshot, encode_snapshot};
use densify_core::moments::{MomentConfig, MomentState};
use densify_core::primitives::{Population, Primitive};
use densify_core::stats::quantile;
use densify_core::toysplat::{loss_and_grads, RenderGrid, RenderSettings};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn primitive() -> impl Strategy<Value = Primitive<f64>> {
    (0.0..1.0f64, 0.0..1.0f64, 0.005..0.3f64, 0.0..=1.0f64, 0..500u64).prop_map(
        |(x, y, s, a, age)| Primitive {
            age,
            ..Primitive::new([x, y], s, a)
        },
    )
}

fn moment_state() -> impl Strategy<Value = MomentState<f64>> {
    (-1.0..1.0f64, -1.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64, 0..50u64).prop_map(
        |(mx, my, vx, vy, t)| {
            // Keep v consistent with m so the SNR stays bounded.
            let v = [vx + mx * mx, vy + my * my];
            MomentState {
                m: [mx, my],
                v,
                steps: t,
            }
        },
    )
}

/// Sort-based type-7 quantile, written independently of the library.
fn brute_quantile(values: &[f64], level: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (v.len() - 1) as f64 * level;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    Some(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

proptest! {
    #[test]
    fn quantile_matches_sorted_oracle(
        values in prop::collection::vec(-1e3..1e3f64, 0..200),
        level in 0.0..=1.0f64,
    ) {
        let got = quantile(&values, level);
        let want = brute_quantile(&values, level);
        match (got, want) {
            (None, None) => {}
            (Some(g), Some(w)) => {
                let tol = 1e-12 * w.abs().max(1.0);
                prop_assert!((g - w).abs() <= tol, "{g} vs {w}");
            }
            other => prop_assert!(false, "{other:?}"),
        }
    }

    #[test]
    fn snapshot_round_trips(
        prims in prop::collection::vec(primitive(), 0..40),
        states in prop::collection::vec(moment_state(), 40),
        with_moments in any::<bool>(),
    ) {
        let pop = Population::from_primitives(prims);
        let states = &states[..pop.len()];
        let bytes = encode_snapshot(&pop, with_moments.then_some(states)).unwrap();
        let back = decode_snapshot::<f64>(&bytes).unwrap();
        prop_assert_eq!(&back.population, &pop);
        if with_moments {
            prop_assert_eq!(back.moments.as_deref(), Some(states));
        } else {
            prop_assert!(back.moments.is_none());
        }
    }

    #[test]
    fn snapshot_round_trips_in_f32(prims in prop::collection::vec(primitive(), 1..20)) {
        let narrow: Vec<Primitive<f32>> = prims
            .iter()
            .map(|p| Primitive {
                age: p.age,
                ..Primitive::new(
                    [p.position[0] as f32, p.position[1] as f32],
                    p.scale as f32,
                    p.opacity as f32,
                )
            })
            .collect();
        let pop = Population::from_primitives(narrow);
        let back = decode_snapshot::<f32>(&encode_snapshot(&pop, None).unwrap()).unwrap();
        prop_assert_eq!(back.population, pop);
    }

    #[test]
    fn mask_of_union_is_union_of_masks(
        a in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64, 0.001..0.2f64), 0..8),
        b in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64, 0.001..0.2f64), 0..8),
    ) {
        let fp = |v: &[(f64, f64, f64)]| v.iter().map(|&(x, y, s)| ([x, y], s)).collect::<Vec<_>>();
        let (fa, fb) = (fp(&a), fp(&b));
        let both: Vec<_> = fa.iter().chain(&fb).copied().collect();
        let (ma, mb, mab) = (mask_image(&fa, 24, 24), mask_image(&fb, 24, 24), mask_image(&both, 24, 24));
        for k in 0..mab.pixels.len() {
            let or = if ma.pixels[k] > 0.5 || mb.pixels[k] > 0.5 { 1.0 } else { 0.0 };
            prop_assert_eq!(mab.pixels[k], or);
        }
        prop_assert!(mask_area_fraction(&mab) >= mask_area_fraction(&ma));
        prop_assert!(mask_area_fraction(&mab) <= mask_area_fraction(&ma) + mask_area_fraction(&mb) + 1e-12);
    }

    #[test]
    fn raising_thresholds_never_adds_candidates(
        states in prop::collection::vec(moment_state(), 1..80),
        q in (0.01..0.99f64, 0.01..0.99f64),
        snr in (0.0..1.5f64, 0.0..1.5f64),
    ) {
        let mc = MomentConfig::default();
        let eligible = vec![true; states.len()];
        let (q_lo, q_hi) = if q.0 <= q.1 { q } else { (q.1, q.0) };
        let (s_lo, s_hi) = if snr.0 <= snr.1 { snr } else { (snr.1, snr.0) };
        let pick = |tau_q, tau_snr| {
            let cc = ControllerConfig { tau_q, tau_snr, ..ControllerConfig::default() };
            cadam_select(&states, &eligible, &cc, &mc).unwrap().densify_mask
        };
        let loose = pick(q_lo, s_lo);
        for tight in [pick(q_hi, s_lo), pick(q_lo, s_hi), pick(q_hi, s_hi)] {
            for (t, l) in tight.iter().zip(&loose) {
                prop_assert!(!t || *l);
            }
        }
    }

    #[test]
    fn selective_reset_touches_only_low_snr_opacity(
        prims in prop::collection::vec(primitive(), 1..40),
        states in prop::collection::vec(moment_state(), 40),
        step in 0..2000u64,
    ) {
        let mc = MomentConfig::default();
        let cc = ControllerConfig::default();
        let states = &states[..prims.len()];
        let mut pop = Population::from_primitives(prims.clone());
        let reset = selective_opacity_reset(&mut pop, states, &cc, &mc, step).unwrap();
        for (i, (before, after)) in prims.iter().zip(pop.primitives()).enumerate() {
            prop_assert_eq!(before.position, after.position);
            prop_assert_eq!(before.scale, after.scale);
            prop_assert_eq!(before.age, after.age);
            let low = states[i].intrinsic_snr(&mc).is_ok_and(|s| s < cc.tau_snr);
            if step >= cc.warmup_steps && low {
                prop_assert_eq!(after.opacity, 0.01);
                prop_assert!(reset.contains(&(i as u64)));
            } else {
                prop_assert_eq!(after.opacity, before.opacity);
                prop_assert!(!reset.contains(&(i as u64)));
            }
        }
    }

    #[test]
    fn structural_ops_keep_the_books(
        prims in prop::collection::vec(primitive(), 1..30),
        rounds in prop::collection::vec(
            (prop::collection::vec(any::<bool>(), 64), 0..64usize),
            1..6,
        ),
        cap in 5..80usize,
        seed in any::<u64>(),
    ) {
        let cc = ControllerConfig {
            max_primitives: cap.max(prims.len()),
            ..ControllerConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pop = Population::from_primitives(prims);
        let mut expected = pop.len() as i64;
        for (bits, pruneable) in rounds {
            let mask: Vec<bool> = bits.iter().cycle().take(pop.len()).copied().collect();
            let (split, clone) = decide_actions(&mask, &pop, &cc);
            let g = apply_densify(&mut pop, &split, &clone, &cc, &mut rng).unwrap();
            prop_assert_eq!(g.lineage.len(), pop.len());
            expected += 2 * g.split.len() as i64 - g.split.len() as i64 + g.cloned.len() as i64;
            prop_assert_eq!(pop.len() as i64, expected);
            prop_assert!(pop.len() <= cc.max_primitives);
            // Knock some opacities under the prune floor.
            let n = pop.len();
            for p in pop.primitives_mut().iter_mut().take(pruneable.min(n)).step_by(3) {
                p.opacity = 0.0;
            }
            let (_, removed) = prune(&mut pop, &cc);
            expected -= removed.len() as i64;
            prop_assert_eq!(pop.len() as i64, expected);
            pop.audit().unwrap();
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn analytic_gradients_match_central_differences(
        prims in prop::collection::vec(
            (0.2..0.8f64, 0.2..0.8f64, 0.04..0.2f64, 0.1..0.9f64),
            1..5,
        ),
        seed in any::<u64>(),
    ) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let target = RenderGrid::from_fn(16, 16, |_, _| rng.random::<f64>());
        let settings = RenderSettings::exact();
        let pop = Population::from_primitives(
            prims.iter().map(|&(x, y, s, a)| Primitive::new([x, y], s, a)).collect(),
        );
        let ev = loss_and_grads(&pop, &target, &settings).unwrap();
        let loss_at = |pop: &Population<f64>| loss_and_grads(pop, &target, &settings).unwrap().loss;
        let scale = ev
            .grads
            .iter()
            .flat_map(|g| [g.position[0].abs(), g.position[1].abs(), g.scale.abs(), g.opacity.abs()])
            .fold(0.0f64, f64::max);
        let h = 1e-6;
        for i in 0..pop.len() {
            for k in 0..4 {
                let bump = |d: f64| {
                    let mut p = pop.clone();
                    let q = &mut p.primitives_mut()[i];
                    match k {
                        0 => q.position[0] += d,
                        1 => q.position[1] += d,
                        2 => q.scale += d,
                        _ => q.opacity += d,
                    }
                    p
                };
                let fd = (loss_at(&bump(h)) - loss_at(&bump(-h))) / (2.0 * h);
                let g = &ev.grads[i];
                let a = [g.position[0], g.position[1], g.scale, g.opacity][k];
                let denom = a.abs().max(fd.abs()).max(1e-6 * scale).max(1e-12);
                prop_assert!((a - fd).abs() / denom < 1e-4, "prim {i} param {k}: {a} vs {fd}");
            }
        }
    }
}
