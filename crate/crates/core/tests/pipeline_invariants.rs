use agegen_core::phantom::{make_phantom, random_velocity_field, PhantomSpec};
use agegen_core::pipeline::{
    assign_age, plan_for_gap, plan_generation, run_subject, PipelineParams, StoppingRule, SubjectPair,
    VelocitySource,
};
use agegen_core::registration::DemonsParams;
use agegen_core::svf::{integrate_sequence, IntegrationParams, TimeGrid};
use agegen_core::volume::Dims;
use agegen_core::MetricId;
use proptest::prelude::*;

fn small_spec() -> PhantomSpec {
    PhantomSpec {
        dims: Dims::cube(24),
        head_center: [11.5; 3],
        head_semi_axes: [10.0, 8.5, 9.0],
        cavity_radius: 2.5,
        growth_rate: 0.15,
        ..PhantomSpec::default()
    }
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

#[test]
fn degenerate_pair_reproduces_moving() {
    let (img, labels) = make_phantom(&small_spec(), 60.0).unwrap();
    let pair = SubjectPair::new("same", img.clone(), 60.0, img.clone(), 63.0)
        .unwrap()
        .with_labels(Some(labels.clone()), Some(labels))
        .unwrap();
    let plan = plan_generation(&pair, 3.0).unwrap();
    let demons = DemonsParams {
        iterations: 20,
        ..DemonsParams::default()
    };
    let run = run_subject(&pair, &plan, &VelocitySource::Demons(demons), &PipelineParams::default()).unwrap();
    assert_eq!(run.frames.len(), 6);
    for f in &run.frames {
        let worst = f.image.data().iter().zip(img.data()).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
        assert!(worst < 1e-3);
        assert_eq!(f.age, assign_age(60.0, 63.0, f.t, run.adjusted_s));
    }
    assert_eq!(run.frames.last().unwrap().age, 63.0);
}

#[test]
fn emitted_sequence_invariants() {
    let spec = small_spec();
    let (m, lm) = make_phantom(&spec, 60.0).unwrap();
    let (f, lf) = make_phantom(&spec, 68.0).unwrap();
    let pair = SubjectPair::new("p", m, 60.0, f, 68.0)
        .unwrap()
        .with_labels(Some(lm.clone()), Some(lf))
        .unwrap();
    let plan = plan_generation(&pair, 3.0).unwrap();
    assert_eq!((plan.frames, plan.age_step), (16, 0.5));
    let v = random_velocity_field(spec.dims, 3.0, 0.6, 5);
    for stopping in [StoppingRule::Mean, StoppingRule::Metric(MetricId::Ncc), StoppingRule::Metric(MetricId::Dsc)] {
        let params = PipelineParams {
            stopping,
            ..PipelineParams::default()
        };
        let run = run_subject(&pair, &plan, &VelocitySource::Field(v.clone()), &params).unwrap();
        if let StoppingRule::Metric(id) = stopping {
            assert_eq!(Some(run.adjusted_s), run.report.best_t_for(id));
        }
        let t: Vec<f64> = run.frames.iter().map(|f| f.t).collect();
        let age: Vec<f64> = run.frames.iter().map(|f| f.age).collect();
        assert_eq!(t.len(), 16);
        assert!(t.windows(2).all(|w| w[0] < w[1]) && age.windows(2).all(|w| w[0] < w[1]));
        assert!((pearson(&t, &age) - 1.0).abs() < 1e-12);
        assert_eq!(*t.last().unwrap(), run.adjusted_s);
        assert_eq!(*age.last().unwrap(), 68.0);
        let allowed = lm.labels();
        for fr in &run.frames {
            let labels = fr.labels.as_ref().unwrap();
            assert!(labels.data().iter().all(|l| *l == 0 || allowed.contains(l)));
        }
        let lo = run.report.best_t.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let hi = run.report.best_t.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        assert!((lo..=hi).contains(&run.report.mean_s));
    }
}

#[test]
fn regeneration_reuses_the_field() {
    // Times common to the first and second grid give the same displacement.
    let v = random_velocity_field(Dims::cube(16), 3.0, 0.5, 8);
    let p = IntegrationParams::default();
    let first = integrate_sequence(&v, &TimeGrid::new(3.0, 12).unwrap(), &p).unwrap();
    let second = integrate_sequence(&v, &TimeGrid::new(1.5, 10).unwrap(), &p).unwrap();
    // t = 0.75 is frame 3 of the first grid and frame 5 of the second.
    assert!(first[2].max_distance(&second[4]).unwrap() < 1e-4);
    assert!(first[5].max_distance(&second[9]).unwrap() < 1e-4);
}

proptest! {
    #[test]
    fn plan_matches_two_frames_per_year(gap in 0.05f64..40.0, s in 0.5f64..6.0) {
        let p = plan_for_gap(gap, s).unwrap();
        prop_assert_eq!(p.frames, ((2.0 * gap).round() as usize).max(2));
        prop_assert!((p.time_step * p.frames as f64 - s).abs() < 1e-12);
        prop_assert!((p.age_step * p.frames as f64 - gap).abs() < 1e-9);
    }

    #[test]
    fn ages_are_affine_in_t(age_m in 20.0f64..90.0, gap in 0.5f64..20.0, s in 0.2f64..4.0, n in 2usize..30) {
        let grid = TimeGrid::new(s, n).unwrap();
        let ages: Vec<f64> = grid.times().iter().map(|&t| assign_age(age_m, age_m + gap, t, s)).collect();
        prop_assert!(ages.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(*ages.last().unwrap(), age_m + gap);
        let step = ages[1] - ages[0];
        for w in ages.windows(2) {
            prop_assert!((w[1] - w[0] - step).abs() < 1e-9);
        }
    }
}
