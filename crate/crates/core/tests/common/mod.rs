//! Reference implementations shared by the integration tests.

#![allow(dead_code)]

/// Transition penalty between consecutive labels on a path.
pub fn penalty(a: usize, b: usize, p1: u64, p2: u64) -> u64 {
    match a.abs_diff(b) {
        0 => 0,
        1 => p1,
        _ => p2,
    }
}

/// Pixels of the path ending at `(u, v)` along direction `r`, first pixel first.
pub fn chain_to(w: usize, h: usize, u: usize, v: usize, r: (i32, i32)) -> Vec<(usize, usize)> {
    let mut chain = vec![(u, v)];
    let (mut x, mut y) = (u as i64 - i64::from(r.0), v as i64 - i64::from(r.1));
    while x >= 0 && y >= 0 && x < w as i64 && y < h as i64 {
        chain.push((x as usize, y as usize));
        x -= i64::from(r.0);
        y -= i64::from(r.1);
    }
    chain.reverse();
    chain
}

/// Path cost by dynamic programming over the chain prefix of every pixel,
/// recomputed from scratch per pixel.
pub fn oracle_path(
    w: usize,
    h: usize,
    nd: usize,
    costs: &[u32],
    r: (i32, i32),
    p1: u64,
    p2: u64,
) -> Vec<u64> {
    let c = |u: usize, v: usize, d: usize| u64::from(costs[(v * w + u) * nd + d]);
    let mut out = vec![0u64; w * h * nd];
    for v in 0..h {
        for u in 0..w {
            let chain = chain_to(w, h, u, v, r);
            let (u0, v0) = chain[0];
            let mut dp: Vec<u64> = (0..nd).map(|d| c(u0, v0, d)).collect();
            for &(x, y) in &chain[1..] {
                dp = (0..nd)
                    .map(|d| {
                        c(x, y, d) + (0..nd).map(|t| dp[t] + penalty(d, t, p1, p2)).min().unwrap()
                    })
                    .collect();
            }
            out[(v * w + u) * nd..(v * w + u + 1) * nd].copy_from_slice(&dp);
        }
    }
    out
}

/// Path cost by enumerating every label sequence along the chain.
pub fn enumerate_path(
    w: usize,
    h: usize,
    nd: usize,
    costs: &[u32],
    r: (i32, i32),
    p1: u64,
    p2: u64,
) -> Vec<u64> {
    let mut out = vec![u64::MAX; w * h * nd];
    for v in 0..h {
        for u in 0..w {
            let chain = chain_to(w, h, u, v, r);
            let n = chain.len();
            let total = nd.pow(n as u32);
            for code in 0..total {
                let mut labels = Vec::with_capacity(n);
                let mut k = code;
                for _ in 0..n {
                    labels.push(k % nd);
                    k /= nd;
                }
                let mut cost = 0u64;
                for (i, &(x, y)) in chain.iter().enumerate() {
                    cost += u64::from(costs[(y * w + x) * nd + labels[i]]);
                    if i > 0 {
                        cost += penalty(labels[i], labels[i - 1], p1, p2);
                    }
                }
                let slot = &mut out[(v * w + u) * nd + labels[n - 1]];
                *slot = (*slot).min(cost);
            }
        }
    }
    out
}

pub fn pfm_bits(map: &lfdepth::Image<f32>) -> Vec<u32> {
    map.data().iter().map(|x| x.to_bits()).collect()
}
