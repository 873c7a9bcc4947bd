//! Bounded scalar minimisation used by the per-step solvers.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for a minimiser of `f` on `[lo, hi]`, stopping when
/// the bracket is narrower than `rel_width * (hi - lo)`.
pub(crate) fn golden_section(f: &mut dyn FnMut(f64) -> f64, lo: f64, hi: f64, rel_width: f64) -> f64 {
    if !(hi > lo) {
        return lo;
    }
    let stop = rel_width * (hi - lo);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > stop {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Minimises `f` on `[lo, hi]` given its derivative `df`.
///
/// A coarse golden-section pass locates the basin; the minimiser is then
/// polished by an Illinois root search on `df` inside a small bracket, and the
/// best of the polished point and the interval ends is returned.
pub(crate) fn minimize_bounded(
    f: &mut dyn FnMut(f64) -> f64,
    df: &mut dyn FnMut(f64) -> f64,
    lo: f64,
    hi: f64,
) -> f64 {
    if !(hi > lo) {
        return lo;
    }
    let coarse = golden_section(f, lo, hi, 1e-5);
    let width = 2e-5 * (hi - lo);
    let mut a = (coarse - width).max(lo);
    let mut b = (coarse + width).min(hi);
    let mut da = df(a);
    let mut db = df(b);

    let mut candidates = vec![coarse, lo, hi];
    if da < 0.0 && db > 0.0 {
        let mut side = 0i8;
        for _ in 0..200 {
            let x = (a * db - b * da) / (db - da);
            let x = if x > a && x < b { x } else { 0.5 * (a + b) };
            let dx = df(x);
            if dx == 0.0 {
                a = x;
                b = x;
                break;
            }
            if dx < 0.0 {
                a = x;
                da = dx;
                if side == -1 {
                    db *= 0.5;
                }
                side = -1;
            } else {
                b = x;
                db = dx;
                if side == 1 {
                    da *= 0.5;
                }
                side = 1;
            }
            if b - a <= 4.0 * f64::EPSILON * (1.0 + a.abs().max(b.abs())) {
                break;
            }
        }
        candidates.push(0.5 * (a + b));
    } else if a == lo && da >= 0.0 {
        candidates.push(lo);
    } else if b == hi && db <= 0.0 {
        candidates.push(hi);
    }

    let mut best = candidates[0];
    let mut best_value = f(best);
    for &c in &candidates[1..] {
        let v = f(c);
        if v < best_value {
            best = c;
            best_value = v;
        }
    }
    best
}
