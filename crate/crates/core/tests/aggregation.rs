use imos::aggregation::{broadcast_concat, AggregatorConfig, FeatureAggregator, GlobalFeature, ImageEmbedding};
use imos::autodiff::Tape;
use imos::params::ParamKey;
use ndarray::{Array3, ArrayD, IxDyn};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn projection(agg: &FeatureAggregator, input: &ArrayD<f64>, direction: &ArrayD<f64>) -> f64 {
    let mut tape = Tape::new();
    let x = tape.constant(input.clone());
    let out = agg.forward(&mut tape, x).unwrap();
    let s = tape.project(out, direction);
    tape.value(s)[[]]
}

#[test]
fn parameter_and_input_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut agg = FeatureAggregator::new(AggregatorConfig::full_scale(8), &mut rng);
    let input = ArrayD::from_shape_fn(IxDyn(&[8, 8, 8]), |_| rng.sample::<f64, _>(StandardNormal));
    let direction = ArrayD::from_shape_fn(IxDyn(&[512]), |_| rng.sample::<f64, _>(StandardNormal));

    let mut tape = Tape::new();
    let x = tape.constant(input.clone());
    let out = agg.forward(&mut tape, x).unwrap();
    let s = tape.project(out, &direction);
    let grads = tape.backward(s);
    let input_grad = grads.get(x).cloned().expect("input gradient");
    let param_grads = grads.params(&tape);

    let h = 1e-6;
    for _ in 0..6 {
        let i = rng.random_range(0..input.len());
        let mut plus = input.clone();
        let mut minus = input.clone();
        plus.as_slice_memory_order_mut().unwrap()[i] += h;
        minus.as_slice_memory_order_mut().unwrap()[i] -= h;
        let numeric = (projection(&agg, &plus, &direction) - projection(&agg, &minus, &direction)) / (2.0 * h);
        let a = input_grad.as_slice_memory_order().unwrap()[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        assert!(rel < 1e-4, "input[{i}]: analytic {a}, numeric {numeric}");
    }
    let names = ["conv0.weight", "conv2.bias", "conv4.weight", "fc.weight", "fc.bias"];
    let mut checked = 0;
    for name in names {
        let key = ParamKey::new(FeatureAggregator::GROUP, name);
        let analytic = &param_grads[&key];
        let len = analytic.len();
        for _ in 0..4 {
            let i = rng.random_range(0..len);
            let original = agg.params().expect(name).as_slice_memory_order().unwrap()[i];
            let mut eval = |v: f64| {
                agg.params_mut().get_mut(name).unwrap().as_slice_memory_order_mut().unwrap()[i] = v;
                projection(&agg, &input, &direction)
            };
            let numeric = (eval(original + h) - eval(original - h)) / (2.0 * h);
            eval(original);
            let a = analytic.as_slice_memory_order().unwrap()[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            assert!(rel < 1e-4, "{name}[{i}]: analytic {a}, numeric {numeric}, rel {rel}");
            checked += 1;
        }
    }
    assert_eq!(checked, 20);
}

#[test]
fn gradient_reaches_aggregator_from_enhanced_embedding() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let agg = FeatureAggregator::new(AggregatorConfig::full_scale(4), &mut rng);
    let mut tape = Tape::new();
    let x = tape.constant(ArrayD::from_shape_fn(IxDyn(&[4, 6, 10]), |_| rng.sample::<f64, _>(StandardNormal)));
    let g = agg.forward(&mut tape, x).unwrap();
    let enhanced = tape.concat_broadcast(x, g);
    let direction = ArrayD::from_shape_fn(IxDyn(&[516, 6, 10]), |_| rng.sample::<f64, _>(StandardNormal));
    let s = tape.project(enhanced, &direction);
    let grads = tape.backward(s).params(&tape);
    assert_eq!(grads.len(), 12);
    assert!(grads.values().all(|g| g.iter().any(|&v| v != 0.0)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn aggregate_and_concat_shapes(c in 1usize..6, h in 1usize..20, w in 1usize..20, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let agg = FeatureAggregator::new(AggregatorConfig { in_channels: c, widths: [4; 5] }, &mut rng);
        let e = ImageEmbedding::new(Array3::from_shape_fn((c, h, w), |_| rng.sample::<f64, _>(StandardNormal))).unwrap();
        let g: GlobalFeature = agg.aggregate(&e).unwrap();
        prop_assert_eq!(g.values().len(), 512);
        let out = broadcast_concat(&e, &g);
        prop_assert_eq!(out.values().dim(), (c + 512, h, w));
        prop_assert_eq!(out.values().slice(ndarray::s![..c, .., ..]), e.values().view());
        for y in 0..h {
            for x in 0..w {
                prop_assert_eq!(out.values().slice(ndarray::s![c.., y, x]), g.values().view());
            }
        }
    }
}
