//! Small linear stencils on single-channel row-major grids, together with
//! their adjoints. The energy gradient is assembled from these adjoints.

/// Mirror an index into `0..n` without repeating the edge sample
/// (`-1 -> 1`, `n -> n - 2`).
#[inline]
pub fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut k = i.rem_euclid(period);
    if k >= n as isize {
        k = period - k;
    }
    k as usize
}

/// Forward difference along x. The last column repeats its left neighbour.
pub fn forward_dx(data: &[f64], width: usize, height: usize) -> Vec<f64> {
    debug_assert!(width >= 2);
    let mut out = vec![0.0; width * height];
    for y in 0..height {
        let row = &data[y * width..(y + 1) * width];
        let dst = &mut out[y * width..(y + 1) * width];
        for x in 0..width - 1 {
            dst[x] = row[x + 1] - row[x];
        }
        dst[width - 1] = dst[width - 2];
    }
    out
}

/// Forward difference along y. The last row repeats the row above.
pub fn forward_dy(data: &[f64], width: usize, height: usize) -> Vec<f64> {
    debug_assert!(height >= 2);
    let mut out = vec![0.0; width * height];
    for y in 0..height - 1 {
        for x in 0..width {
            out[y * width + x] = data[(y + 1) * width + x] - data[y * width + x];
        }
    }
    let (head, tail) = out.split_at_mut((height - 1) * width);
    tail.copy_from_slice(&head[(height - 2) * width..]);
    out
}

/// `acc += Dxᵀ g` for the operator of [`forward_dx`].
pub fn forward_dx_adjoint(g: &[f64], width: usize, height: usize, acc: &mut [f64]) {
    for y in 0..height {
        let base = y * width;
        for x in 0..width - 1 {
            let gi = g[base + x];
            acc[base + x + 1] += gi;
            acc[base + x] -= gi;
        }
        let gi = g[base + width - 1];
        acc[base + width - 1] += gi;
        acc[base + width - 2] -= gi;
    }
}

/// `acc += Dyᵀ g` for the operator of [`forward_dy`].
pub fn forward_dy_adjoint(g: &[f64], width: usize, height: usize, acc: &mut [f64]) {
    for y in 0..height {
        let (lo, hi) = if y + 1 < height { (y, y + 1) } else { (y - 1, y) };
        for x in 0..width {
            let gi = g[y * width + x];
            acc[hi * width + x] += gi;
            acc[lo * width + x] -= gi;
        }
    }
}

/// 3×3 box mean with mirrored borders.
pub fn box3(data: &[f64], width: usize, height: usize) -> Vec<f64> {
    let mut out = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            let mut s = 0.0;
            for dy in -1..=1isize {
                let yy = reflect(y as isize + dy, height);
                for dx in -1..=1isize {
                    let xx = reflect(x as isize + dx, width);
                    s += data[yy * width + xx];
                }
            }
            out[y * width + x] = s / 9.0;
        }
    }
    out
}

/// `acc += Bᵀ g` for the operator of [`box3`].
pub fn box3_adjoint(g: &[f64], width: usize, height: usize, acc: &mut [f64]) {
    for y in 0..height {
        for x in 0..width {
            let gi = g[y * width + x] / 9.0;
            if gi == 0.0 {
                continue;
            }
            for dy in -1..=1isize {
                let yy = reflect(y as isize + dy, height);
                for dx in -1..=1isize {
                    let xx = reflect(x as isize + dx, width);
                    acc[yy * width + xx] += gi;
                }
            }
        }
    }
}
