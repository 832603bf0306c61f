//! End-to-end checks through the public API: stream files into the
//! estimators, compared against brute-force oracles.

use l1sketch::l1_estimator::{ShhConfig, ShhState};
use l1sketch::numerics::Rng;
use l1sketch::oracle::{count_tensor, exact_tvd, materialized_sketch};
use l1sketch::stream::{read_tuple_stream, read_vector_stream};
use l1sketch::tensor::{StreamUpdate, TensorConfig, TensorState};
use proptest::prelude::*;

fn tiny(q: usize, d: usize) -> TensorConfig {
    TensorConfig {
        reps: Some(2),
        top_reps: Some(2),
        buckets: Some(2),
        hh_reps: Some(2),
        ..TensorConfig::new(q, d, 0.3, 0.1)
    }
}

#[test]
fn tuple_file_to_tvd_hand_case() {
    let stream = read_tuple_stream("1 1\n2 2\n".as_bytes(), 2, 2).unwrap();
    let counts = count_tensor(&stream, 2, 2).unwrap();
    assert_eq!(counts, vec![1.0, 0.0, 0.0, 1.0]);
    // Joint diag(1/2, 1/2) against the uniform product: four cells off by 1/4.
    assert!((exact_tvd(&counts, 2, 2).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn product_stream_has_zero_distance() {
    let mut lines = String::new();
    for a in 1..=3 {
        for b in 1..=4 {
            lines.push_str(&format!("{a} {b} 2\n"));
        }
    }
    for text in [lines.clone(), lines.replace(" 2\n", "\n")] {
        let stream = read_tuple_stream(text.as_bytes(), 2, 4).unwrap();
        assert!(exact_tvd(&count_tensor(&stream, 2, 4).unwrap(), 2, 4).unwrap().abs() < 1e-12);
    }
}

#[test]
fn vector_file_feeds_the_estimator() {
    let text: String = (1..=512).map(|i| format!("{i} {}\n", (i % 9) as i64 - 4)).collect();
    let updates = read_vector_stream(text.as_bytes(), Some(512)).unwrap();
    let exact: f64 = updates.iter().map(|u| u.1.abs() as f64).sum();
    let cfg = ShhConfig::new(0.2, 4, 512).with_hh_sizes(1 << 12, 5);
    let mut state = ShhState::build(&mut Rng::new(3, 0), &cfg).unwrap();
    for &(i, v) in &updates {
        state.update(i, v as f64).unwrap();
    }
    let est = state.estimate_at(3.0 * exact, 0.75).unwrap().total;
    assert!((est - exact).abs() <= 0.25 * exact, "{est} vs {exact}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn maintained_sketch_matches_offline(
        seed in any::<u64>(),
        q in 1usize..=3,
        d in 2usize..=4,
        raw in prop::collection::vec((prop::collection::vec(0usize..4, 3), -3i64..=3), 1..25),
    ) {
        let stream: Vec<StreamUpdate> = raw
            .into_iter()
            .map(|(ix, delta)| StreamUpdate::new(ix[..q].iter().map(|i| i % d).collect(), delta))
            .collect();
        let mut state = TensorState::build(&mut Rng::new(seed, 0), &tiny(q, d)).unwrap();
        for u in &stream {
            state.update(u).unwrap();
        }
        let offline = materialized_sketch(&state, &count_tensor(&stream, q, d).unwrap()).unwrap();
        let scale = offline.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        for (a, b) in state.p_sketch().iter().zip(&offline) {
            prop_assert!((a - b).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn shh_state_is_additive(
        seed in any::<u64>(),
        s1 in prop::collection::vec((0usize..64, -5i64..=5), 0..30),
        s2 in prop::collection::vec((0usize..64, -5i64..=5), 0..30),
    ) {
        let cfg = ShhConfig::new(0.25, 4, 64).with_hh_sizes(16, 3);
        let empty = ShhState::build(&mut Rng::new(seed, 1), &cfg).unwrap();
        let (mut a, mut b, mut ab) = (empty.clone(), empty.clone(), empty);
        for &(i, v) in &s1 {
            a.update(i, v as f64).unwrap();
            ab.update(i, v as f64).unwrap();
        }
        for &(i, v) in &s2 {
            b.update(i, v as f64).unwrap();
            ab.update(i, v as f64).unwrap();
        }
        a.add_assign(&b).unwrap();
        prop_assert_eq!(a.accumulators(), ab.accumulators());
    }
}
