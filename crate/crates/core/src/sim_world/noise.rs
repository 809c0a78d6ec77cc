//! Deterministic hash noise used for procedural textures and sensor noise.

/// splitmix64 finaliser over a combined key.
pub fn hash_u64(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash mapped to [0, 1).
pub fn unit_hash(seed: u64, a: u64, b: u64) -> f64 {
    (hash_u64(seed, a, b) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn lattice(seed: u64, ix: i64, iy: i64) -> f64 {
    unit_hash(seed, ix as u64, iy as u64)
}

/// Smooth 2D value noise in [0, 1] with unit lattice spacing.
pub fn value_noise(seed: u64, x: f64, y: f64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (ix, iy) = (x0 as i64, y0 as i64);
    let sx = fx * fx * (3.0 - 2.0 * fx);
    let sy = fy * fy * (3.0 - 2.0 * fy);
    let v00 = lattice(seed, ix, iy);
    let v10 = lattice(seed, ix + 1, iy);
    let v01 = lattice(seed, ix, iy + 1);
    let v11 = lattice(seed, ix + 1, iy + 1);
    let a = v00 + (v10 - v00) * sx;
    let b = v01 + (v11 - v01) * sx;
    a + (b - a) * sy
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_noise_is_bounded_and_continuous() {
        let mut prev = value_noise(3, 0.0, 0.37);
        for i in 1..2000 {
            let x = i as f64 * 0.005;
            let v = value_noise(3, x, 0.37);
            assert!((0.0..=1.0).contains(&v));
            assert!((v - prev).abs() < 0.05);
            prev = v;
        }
    }

    #[test]
    fn unit_hash_range() {
        for i in 0..1000 {
            let u = unit_hash(11, i, 7);
            assert!((0.0..1.0).contains(&u));
        }
    }
}
