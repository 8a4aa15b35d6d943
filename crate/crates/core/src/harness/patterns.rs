//! Random patterns and event streams for equivalence testing.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::pattern::{validate_pattern, PatternExpr};
use crate::types::SemanticEvent;

pub const ALPHABET: [&str; 3] = ["A", "B", "C"];

fn atom<R: Rng>(rng: &mut R) -> PatternExpr {
    PatternExpr::atom(*ALPHABET.choose(rng).unwrap())
}

#[derive(Clone, Copy)]
struct Ctx {
    windowed: bool,
    repeated: bool,
}

fn consuming<R: Rng>(rng: &mut R, depth: usize, ctx: Ctx) -> PatternExpr {
    if depth <= 1 || rng.gen_bool(0.3) {
        return atom(rng);
    }
    let d = depth - 1;
    match rng.gen_range(0..7) {
        0 | 1 => seq(rng, d, ctx),
        2 => PatternExpr::and(consuming(rng, d, ctx), consuming(rng, d, ctx)),
        3 => PatternExpr::or(any(rng, d, ctx), consuming(rng, d, ctx)),
        4 => PatternExpr::times(consuming(rng, d, ctx), rng.gen_range(2..=3)),
        5 if !ctx.repeated => PatternExpr::one_or_more(consuming(
            rng,
            d,
            Ctx {
                repeated: true,
                ..ctx
            },
        )),
        _ => PatternExpr::within(
            consuming(
                rng,
                d,
                Ctx {
                    windowed: true,
                    ..ctx
                },
            ),
            rng.gen_range(1..=8),
        ),
    }
}

fn any<R: Rng>(rng: &mut R, depth: usize, ctx: Ctx) -> PatternExpr {
    if depth > 1 && rng.gen_bool(0.2) {
        PatternExpr::optional(consuming(rng, depth - 1, ctx))
    } else {
        consuming(rng, depth, ctx)
    }
}

fn negation<R: Rng>(rng: &mut R, ctx: Ctx) -> PatternExpr {
    let not = PatternExpr::not(atom(rng));
    if ctx.windowed && rng.gen_bool(0.5) {
        not
    } else {
        PatternExpr::within(not, rng.gen_range(1..=8))
    }
}

fn seq<R: Rng>(rng: &mut R, depth: usize, ctx: Ctx) -> PatternExpr {
    let n = rng.gen_range(2..=3);
    let mut xs: Vec<PatternExpr> = (0..n).map(|_| any(rng, depth, ctx)).collect();
    let room = if ctx.windowed { 2 } else { 3 };
    if depth >= room && rng.gen_bool(0.7) {
        let slots: Vec<usize> = (1..=xs.len())
            .filter(|&i| !xs[i - 1].is_nullable() && xs.get(i).is_none_or(|x| !x.is_nullable()))
            .collect();
        if let Some(&at) = slots.choose(rng) {
            xs.insert(at, negation(rng, ctx));
        }
    }
    PatternExpr::seq(xs)
}

/// A random valid pattern over [`ALPHABET`] with `depth() <= max_depth`,
/// drawing from every construct including windowed negation.
pub fn random_pattern<R: Rng>(rng: &mut R, max_depth: usize) -> PatternExpr {
    let ctx = Ctx {
        windowed: false,
        repeated: false,
    };
    loop {
        let p = if rng.gen_bool(0.25) {
            // negation-heavy shapes: a windowed or top-level sequence
            let windowed = rng.gen_bool(0.5);
            let body = seq(
                rng,
                max_depth - 1 - usize::from(windowed),
                Ctx { windowed, ..ctx },
            );
            if windowed {
                PatternExpr::within(body, rng.gen_range(1..=8))
            } else {
                body
            }
        } else if rng.gen_bool(0.4) {
            PatternExpr::within(
                consuming(
                    rng,
                    max_depth - 1,
                    Ctx {
                        windowed: true,
                        ..ctx
                    },
                ),
                rng.gen_range(1..=8),
            )
        } else {
            consuming(rng, max_depth, ctx)
        };
        if p.depth() <= max_depth && validate_pattern(&p).is_ok() {
            return p;
        }
    }
}

/// A random pattern that contains at least one negation with no enclosing
/// window. Other branches may still carry windows.
pub fn random_unbounded_negation<R: Rng>(rng: &mut R, max_depth: usize) -> PatternExpr {
    let ctx = Ctx {
        windowed: false,
        repeated: true,
    };
    let mut p = if rng.gen_bool(0.2) {
        PatternExpr::not(atom(rng))
    } else {
        let mut xs = vec![consuming(rng, 2, ctx)];
        xs.push(PatternExpr::not(atom(rng)));
        if rng.gen_bool(0.5) {
            xs.push(consuming(rng, 2, ctx));
        }
        PatternExpr::seq(xs)
    };
    while p.depth() < max_depth && rng.gen_bool(0.6) {
        p = match rng.gen_range(0..6) {
            0 => PatternExpr::seq(vec![consuming(rng, 2, ctx), p]),
            1 => PatternExpr::or(p, consuming(rng, 2, ctx)),
            2 => PatternExpr::and(consuming(rng, 2, ctx), p),
            3 => PatternExpr::optional(p),
            4 => PatternExpr::times(p, rng.gen_range(2..=3)),
            _ => PatternExpr::one_or_more(p),
        };
    }
    p
}

/// Up to `max_len` events of one entity with types from [`ALPHABET`] and
/// non-decreasing timestamps in `1..=8`.
pub fn random_stream<R: Rng>(rng: &mut R, max_len: usize) -> Vec<SemanticEvent> {
    let n = rng.gen_range(0..=max_len);
    let mut ts: Vec<i64> = (0..n).map(|_| rng.gen_range(1..=8)).collect();
    ts.sort_unstable();
    ts.into_iter()
        .enumerate()
        .map(|(i, t)| {
            let ty = *ALPHABET.choose(rng).unwrap();
            SemanticEvent::new(format!("{ty}{i}@{t}"), "e", ty, t)
        })
        .collect()
}

/// A random partition of the items `x0..x{n-1}` into at most `max_clusters`
/// non-empty clusters.
pub fn random_partition<R: Rng>(rng: &mut R, n: usize, max_clusters: usize) -> Vec<Vec<String>> {
    let k = rng.gen_range(1..=max_clusters.max(1));
    let mut clusters: Vec<Vec<String>> = vec![Vec::new(); k];
    for i in 0..n {
        clusters[rng.gen_range(0..k)].push(format!("x{i}"));
    }
    clusters.retain(|c| !c.is_empty());
    clusters
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_patterns_are_valid_and_shallow() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..300 {
            let p = random_pattern(&mut rng, 4);
            assert!(p.depth() <= 4);
            assert!(validate_pattern(&p).is_ok(), "{p}");
        }
    }

    #[test]
    fn generator_reaches_negation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let with_not = (0..300)
            .map(|_| random_pattern(&mut rng, 4).to_string())
            .filter(|s| s.contains("NOT"))
            .count();
        assert!(with_not > 30, "{with_not}");
    }

    #[test]
    fn streams_are_sorted() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let s = random_stream(&mut rng, 8);
            assert!(s.len() <= 8);
            assert!(s.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
        }
    }
}
