use rand::seq::index::sample;
use rand::Rng;

use super::{EliteArchive, Individual};
use crate::bridge::OpKind;

/// Size of the "top 20%" band: ⌈0.2·m⌉.
pub fn top_count(m: usize) -> usize {
    (m * 2).div_ceil(10)
}

/// Size of the top and bottom thirds: ⌈m/3⌉.
pub fn third_count(m: usize) -> usize {
    m.div_ceil(3)
}

fn draw(rng: &mut impl Rng, lo: usize, hi: usize, k: usize) -> Vec<usize> {
    sample(rng, hi - lo, k).into_iter().map(|i| lo + i).collect()
}

/// Picks the individuals embedded in a prompt, best rank first.
///
/// E1/E2 draw ⌈p/2⌉ from the top band and the rest from below it, shifting
/// any overflow to the other band; `p` is clamped to the archive size. C1
/// returns (one of the top third, one of the bottom third), or nothing when
/// fewer than two members exist.
pub fn select_for_prompt(
    archive: &EliteArchive,
    op: OpKind,
    p: usize,
    rng: &mut impl Rng,
) -> Vec<Individual> {
    let m = archive.len();
    let members = archive.members();
    let ranks: Vec<usize> = match op {
        OpKind::C1 => {
            if m < 2 {
                return Vec::new();
            }
            let t = third_count(m);
            vec![rng.random_range(0..t), rng.random_range(m - t..m)]
        }
        OpKind::E1 | OpKind::E2 => {
            let p = p.min(m);
            if p == m {
                (0..m).collect()
            } else {
                let top = top_count(m);
                let mut k_top = p.div_ceil(2).min(top);
                let k_rest = (p - k_top).min(m - top);
                k_top = p - k_rest;
                let mut r = draw(rng, 0, top, k_top);
                r.extend(draw(rng, top, m, k_rest));
                r.sort_unstable();
                r
            }
        }
    };
    ranks.into_iter().map(|r| members[r].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_sizes() {
        assert_eq!(top_count(30), 6);
        assert_eq!(top_count(4), 1);
        assert_eq!(top_count(1), 1);
        assert_eq!(third_count(30), 10);
        assert_eq!(third_count(2), 1);
        assert_eq!(third_count(4), 2);
    }
}
