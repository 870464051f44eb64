use proptest::prelude::*;

use bksef_core::arch::{self, Kernel, LayerSpec, OpKind};
use bksef_core::cost;
use bksef_core::objective::{self, score_columns};
use bksef_core::optimizer::{self, OptimizationConfig};
use bksef_core::report;
use bksef_core::testing::{self, strategies};
use bksef_core::{FeatureShape, Gamma, KernelCandidates, ObjectiveWeights};

fn weights() -> impl Strategy<Value = ObjectiveWeights> {
    (0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0)
        .prop_filter("one positive weight", |(a, b, c)| a + b + c > 0.0)
        .prop_map(|(a, b, c)| ObjectiveWeights::new(a, b, c).unwrap())
}

fn gamma() -> impl Strategy<Value = Gamma> {
    (0.01f64..5.0).prop_map(|g| Gamma::new(g).unwrap())
}

/// Gap between the best and runner-up score; near-ties can flip under
/// floating-point reassociation, so argmax equality is only asserted
/// when this is comfortably positive.
fn margin(t: &objective::ScoreTable) -> f64 {
    let best = t.score_of(t.chosen_k).unwrap();
    t.rows.iter().filter(|r| r.k != t.chosen_k).map(|r| best - r.score).fold(f64::INFINITY, f64::min)
}

fn candidate_set() -> impl Strategy<Value = KernelCandidates> {
    prop::sample::subsequence(vec![1u32, 3, 5, 7, 9, 11], 1..=6).prop_map(|v| KernelCandidates::new(v).unwrap())
}

/// A tunable layer together with its input shape.
fn layer_context() -> impl Strategy<Value = (LayerSpec, FeatureShape)> {
    (strategies::tunable_kind(), 1u32..=64, 1u32..=64, 1u32..=128, 1u32..=128, 1u32..=2).prop_map(
        |(kind, h, w, cin, cout, s)| {
            let cout = if kind.preserves_channels() { cin } else { cout };
            (LayerSpec::new("x", kind, cin, cout, Kernel::Free, s), FeatureShape::new(h, w, cin))
        },
    )
}

proptest! {
    #[test]
    fn same_padding_shape_law(spec in strategies::resolved_spec(6)) {
        let trace = arch::propagate_shapes(&spec).unwrap();
        let mut hw = (spec.input.height, spec.input.width);
        for (layer, e) in spec.layers.iter().zip(&trace.entries) {
            hw = (hw.0.div_ceil(layer.stride), hw.1.div_ceil(layer.stride));
            prop_assert_eq!((e.output.height, e.output.width), hw);
            prop_assert_eq!(e.output.channels, layer.out_channels);
            prop_assert!(e.output.height >= 1 && e.output.width >= 1);
        }
        // Kernel size never affects shapes.
        let mut bigger = spec.clone();
        for l in bigger.layers.iter_mut().filter(|l| l.kind.is_tunable()) {
            l.kernel = Kernel::Fixed(9);
        }
        prop_assert_eq!(arch::propagate_shapes(&bigger).unwrap(), trace);
    }

    #[test]
    fn receptive_field_matches_oracle(spec in strategies::resolved_spec(5)) {
        let trace = arch::receptive_field_trace(&spec).unwrap();
        let rf: Vec<u64> = trace.entries.iter().map(|e| e.receptive_field).collect();
        prop_assert_eq!(rf.clone(), testing::influence_receptive_fields(&spec));
        prop_assert!(rf.windows(2).all(|w| w[0] <= w[1]));

        let mut jump = 1u64;
        for (layer, e) in spec.layers.iter().zip(&trace.entries) {
            prop_assert_eq!(e.jump, jump);
            jump *= u64::from(layer.stride);
        }
        prop_assert_eq!(trace.entries[0].jump, 1);
    }

    #[test]
    fn receptive_field_monotone_in_kernel(spec in strategies::resolved_spec(5), pick in any::<prop::sample::Index>()) {
        let tunable: Vec<usize> = spec.layers.iter().enumerate().filter(|(_, l)| l.kind.is_tunable()).map(|(i, _)| i).collect();
        prop_assume!(!tunable.is_empty());
        let i = tunable[pick.index(tunable.len())];
        let mut grown = spec.clone();
        grown.layers[i].kernel = Kernel::Fixed(grown.layers[i].kernel.fixed().unwrap() + 2);
        let before = arch::receptive_field_trace(&spec).unwrap();
        let after = arch::receptive_field_trace(&grown).unwrap();
        for (b, a) in before.entries.iter().zip(&after.entries) {
            prop_assert!(a.receptive_field >= b.receptive_field);
        }
    }

    #[test]
    fn macs_strictly_increase_and_scale_with_k_squared((layer, shape) in layer_context()) {
        let macs: Vec<u64> = [1u32, 3, 5, 7, 9].iter().map(|&k| cost::layer_macs(&layer.with_kernel(k), shape).unwrap()).collect();
        prop_assert!(macs.windows(2).all(|w| w[0] < w[1]));
        if layer.kind == OpKind::StandardConv {
            // macs(k) / k^2 constant, compared as exact cross-products.
            for (i, &ki) in [1u64, 3, 5, 7, 9].iter().enumerate() {
                prop_assert_eq!(macs[i], macs[0] * ki * ki);
            }
        }
    }

    #[test]
    fn dwsep_cheaper_than_standard(h in 1u32..=64, cin in 1u32..=64, cout in 2u32..=64, k in prop::sample::select(vec![3u32, 5, 7, 9]), s in 1u32..=2) {
        let shape = FeatureShape::new(h, h, cin);
        let std = cost::layer_macs(&LayerSpec::new("s", OpKind::StandardConv, cin, cout, Kernel::Fixed(k), s), shape).unwrap();
        let sep = cost::layer_macs(&LayerSpec::new("d", OpKind::DwsepConv, cin, cout, Kernel::Fixed(k), s), shape).unwrap();
        prop_assert!(sep < std);
    }

    #[test]
    fn network_totals_are_sums(spec in strategies::resolved_spec(8)) {
        let r = cost::network_cost(&spec).unwrap();
        prop_assert_eq!(r.total_macs, r.layers.iter().map(|l| l.macs).sum::<u64>());
        prop_assert_eq!(r.total_params, r.layers.iter().map(|l| l.params).sum::<u64>());
        prop_assert_eq!(r.total_macs, testing::closed_form_macs(&spec));
        prop_assert_eq!(r.model_size_bytes, 4 * r.total_params);
    }

    #[test]
    fn argmax_invariant_under_affine_rescaling(
        (layer, shape) in layer_context(),
        w in weights(),
        g in gamma(),
        a in 0.01f64..100.0,
        b in -10.0f64..10.0,
        c_scale in prop::sample::select(vec![1e-6, 1e-3, 7.0, 1e6]),
    ) {
        let cands = KernelCandidates::default();
        let base = objective::score_candidates(&layer, shape, &cands, w, g).unwrap();
        let col = |f: fn(&objective::ScoreRow) -> f64| base.rows.iter().map(f).collect::<Vec<_>>();
        let ks: Vec<u32> = cands.as_slice().to_vec();
        let i2: Vec<f64> = col(|r| r.raw_i).iter().map(|x| a * x + b).collect();
        let c2: Vec<f64> = col(|r| r.raw_c).iter().map(|x| c_scale * x).collect();
        let t = score_columns("x", &ks, &i2, &col(|r| r.raw_a), &c2, w).unwrap();
        for (r0, r1) in base.rows.iter().zip(&t.rows) {
            prop_assert!((r0.norm_i - r1.norm_i).abs() <= 1e-12);
            prop_assert!((r0.norm_c - r1.norm_c).abs() <= 1e-12);
            prop_assert!((r0.score - r1.score).abs() <= 1e-12);
        }
        if margin(&base) > 1e-9 {
            prop_assert_eq!(t.chosen_k, base.chosen_k);
        }
    }

    #[test]
    fn columns_monotone_and_scores_bounded((layer, shape) in layer_context(), w in weights(), g in gamma(), cands in candidate_set()) {
        let t = objective::score_candidates(&layer, shape, &cands, w, g).unwrap();
        let n = t.rows.len();
        for pair in t.rows.windows(2) {
            prop_assert!(pair[0].raw_i < pair[1].raw_i);
            prop_assert!(pair[0].raw_a < pair[1].raw_a || pair[0].raw_a == 1.0);
            prop_assert!(pair[0].raw_c < pair[1].raw_c);
        }
        if n > 1 {
            prop_assert_eq!((t.rows[0].norm_i, t.rows[n - 1].norm_i), (0.0, 1.0));
            prop_assert_eq!((t.rows[0].norm_c, t.rows[n - 1].norm_c), (0.0, 1.0));
        }
        let [l1, l2, l3] = w.as_array();
        for r in &t.rows {
            for v in [r.norm_i, r.norm_a, r.norm_c] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert!(r.score >= -l3 - 1e-15 && r.score <= l1 + l2 + 1e-15);
            prop_assert_eq!(r.score, w.combine(r.norm_i, r.norm_a, r.norm_c));
        }
        prop_assert!(t.rows.iter().all(|r| r.score <= t.score_of(t.chosen_k).unwrap()));
    }

    #[test]
    fn extreme_weights_and_scaling((layer, shape) in layer_context(), g in gamma(), cands in candidate_set(), w in weights(), scale in 0.01f64..100.0) {
        let cost_only = ObjectiveWeights::new(0.0, 0.0, 1.0).unwrap();
        prop_assert_eq!(objective::score_candidates(&layer, shape, &cands, cost_only, g).unwrap().chosen_k, cands.smallest());
        let no_cost = ObjectiveWeights::new(0.3, 0.7, 0.0).unwrap();
        prop_assert_eq!(objective::score_candidates(&layer, shape, &cands, no_cost, g).unwrap().chosen_k, cands.largest());

        let [a, b, c] = w.as_array();
        let scaled = ObjectiveWeights::new(a * scale, b * scale, c * scale).unwrap();
        let t1 = objective::score_candidates(&layer, shape, &cands, w, g).unwrap();
        let t2 = objective::score_candidates(&layer, shape, &cands, scaled, g).unwrap();
        if margin(&t1) > 1e-9 {
            prop_assert_eq!(t1.chosen_k, t2.chosen_k);
        }
    }

    #[test]
    fn candidate_order_is_irrelevant((layer, shape) in layer_context(), w in weights(), g in gamma(), cands in candidate_set(), seed in any::<u64>()) {
        let mut shuffled = cands.as_slice().to_vec();
        // Deterministic Fisher-Yates driven by the seed.
        let mut state = seed | 1;
        for i in (1..shuffled.len()).rev() {
            state ^= state << 13; state ^= state >> 7; state ^= state << 17;
            shuffled.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let reshuffled = KernelCandidates::new(shuffled).unwrap();
        let a = objective::score_candidates(&layer, shape, &cands, w, g).unwrap();
        let b = objective::score_candidates(&layer, shape, &reshuffled, w, g).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn per_layer_decisions_are_independent(spec in strategies::partially_free_spec(6), w in weights(), g in gamma()) {
        prop_assume!(spec.layers.iter().any(|l| l.kernel.is_free()));
        let config = OptimizationConfig::new(KernelCandidates::default(), w, g);
        let r = optimizer::optimize_network(&spec, &config).unwrap();
        let shapes = arch::propagate_shapes(&spec).unwrap();
        let mut decisions = r.decisions.iter();
        for (layer, e) in spec.layers.iter().zip(&shapes.entries) {
            let out = r.optimized_spec.layers.iter().find(|l| l.id == layer.id).unwrap();
            if layer.kernel.is_free() {
                let alone = objective::score_candidates(layer, e.input, &config.candidates, w, g).unwrap();
                prop_assert_eq!(decisions.next().unwrap(), &alone);
                prop_assert_eq!(out.kernel, Kernel::Fixed(alone.chosen_k));
            } else {
                prop_assert_eq!(out, layer);
            }
        }
    }

    #[test]
    fn budget_soundness_and_repair_monotonicity(spec in strategies::partially_free_spec(6), w in weights(), g in gamma(), frac in 0.0f64..1.2) {
        let cands = KernelCandidates::default();
        let lo = cost::network_cost(&optimizer::resolve_free(&spec, cands.smallest())).unwrap().total_macs;
        let hi = cost::network_cost(&optimizer::resolve_free(&spec, cands.largest())).unwrap().total_macs;
        let budget = lo + ((hi - lo) as f64 * frac) as u64;
        let config = OptimizationConfig::new(cands.clone(), w, g).with_budget(budget.max(1));
        match optimizer::optimize_network(&spec, &config) {
            Ok(r) => {
                prop_assert!(r.total_macs_after_repair <= budget.max(1));
                prop_assert_eq!(r.total_macs_after_repair, cost::network_cost(&r.optimized_spec).unwrap().total_macs);
                let mut total = r.total_macs_before_repair;
                for step in &r.repair_log {
                    prop_assert!(step.to_k < step.from_k);
                    prop_assert!(step.macs_saved > 0);
                    total -= step.macs_saved;
                }
                prop_assert_eq!(total, r.total_macs_after_repair);
                for (before, after) in spec.layers.iter().zip(&r.optimized_spec.layers) {
                    if !before.kernel.is_free() {
                        prop_assert_eq!(before, after);
                    }
                }
                let again = optimizer::optimize_network(&spec, &config).unwrap();
                prop_assert_eq!(again, r);
            }
            Err(e) => {
                prop_assert!(lo > budget.max(1), "unexpected failure {}", e);
            }
        }
    }

    #[test]
    fn descriptor_roundtrip(spec in strategies::partially_free_spec(8)) {
        let text = report::emit_spec(&spec);
        prop_assert_eq!(report::parse_spec(&text).unwrap(), spec);
    }

    #[test]
    fn unknown_keys_rejected(spec in strategies::partially_free_spec(4), key in "[a-z]{3,10}", at_layer in any::<bool>()) {
        prop_assume!(!["id", "kind", "in_channels", "out_channels", "kernel", "stride", "padding", "name", "input", "layers"].contains(&key.as_str()));
        let mut value = serde_json::to_value(&spec).unwrap();
        if at_layer {
            value["layers"][0][&key] = serde_json::json!(1);
        } else {
            value[&key] = serde_json::json!(1);
        }
        let err = report::parse_spec(&value.to_string()).unwrap_err().to_string();
        prop_assert!(err.contains(&key), "{}", err);
    }

    #[test]
    fn comparison_antisymmetry(a in strategies::resolved_spec(6), b in strategies::resolved_spec(6)) {
        let ab = report::compare(&a, &b).unwrap();
        let ba = report::compare(&b, &a).unwrap();
        if let (Some(dab), Some(dba)) = (ab.mac_delta_percent, ba.mac_delta_percent) {
            prop_assert!(((1.0 + dab / 100.0) * (1.0 + dba / 100.0) - 1.0).abs() <= 1e-9);
        }
    }
}
