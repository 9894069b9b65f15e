//! Greedy-shift TER against an exhaustive minimum over all block-move
//! sequences, on short random sequences.

mod common;

use common::{exhaustive_ter_edits, random_pair};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rapt_core::metrics::{levenshtein, ter_edits};

#[test]
fn oracle_known_cases() {
    let h = ["c", "d", "a", "b"];
    let r = ["a", "b", "c", "d"];
    assert_eq!(exhaustive_ter_edits(&h, &r), 1);
    assert_eq!(exhaustive_ter_edits(&["a", "b", "d"], &["a", "b", "c", "d"]), 1);
    assert_eq!(exhaustive_ter_edits(&["x"], &["a", "b"]), 2);
}

#[test]
fn greedy_bounded_by_exhaustive_and_levenshtein() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cases = 1000;
    let mut equal = 0;
    for _ in 0..cases {
        let (hyp, reference) = random_pair(&mut rng, 6, 4);
        let greedy = ter_edits(&hyp, &reference).unwrap();
        let best = exhaustive_ter_edits(&hyp, &reference);
        let lev = levenshtein(&hyp, &reference);
        assert!(greedy.total() >= best, "{hyp:?} {reference:?}");
        assert!(greedy.total() <= lev, "{hyp:?} {reference:?}");
        assert!(greedy.total() >= hyp.len().abs_diff(reference.len()));
        if greedy.total() == best {
            equal += 1;
        }
    }
    let rate = equal as f64 / cases as f64;
    eprintln!("greedy == exhaustive in {equal}/{cases}");
    assert!(rate >= 0.95, "agreement {rate}");
}
