/// Derives a child seed from a base seed and a path of indices
/// (splitmix64 finalizer per step).
pub fn mix_seed(base: u64, path: &[u64]) -> u64 {
    let mut h = base ^ 0x5851_f42d_4c95_7f2d;
    for &p in path {
        h = splitmix(h ^ splitmix(p.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_paths_give_distinct_seeds() {
        let a = mix_seed(1, &[0, 1]);
        assert_ne!(a, mix_seed(1, &[1, 0]));
        assert_ne!(a, mix_seed(2, &[0, 1]));
        assert_eq!(a, mix_seed(1, &[0, 1]));
    }
}
