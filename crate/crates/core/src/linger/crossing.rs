use super::sections::{PoincareSection, SectionKind};
use crate::dynamics::{X, Y, Z};
use crate::error::{Error, Result};
use crate::integrator::{Direction, EventRecord, Trajectory};

fn kind_id(kind: SectionKind) -> usize {
    match kind {
        SectionKind::Entry => 0,
        SectionKind::PreJump => 1,
    }
}

const SUBSAMPLES: usize = 4;

/// Bisects a sign change of `x_i - anchor_x` on `[a, b]` and applies the
/// direction and window filters.
fn localize(
    traj: &Trajectory,
    section: &PoincareSection,
    xi: usize,
    base: usize,
    (mut a, mut g_a): (f64, f64),
    (mut b, g_b): (f64, f64),
    buf: &mut [f64],
) -> Option<EventRecord> {
    let sign: i8 = if g_a < 0.0 && g_b >= 0.0 {
        1
    } else if g_a > 0.0 && g_b <= 0.0 {
        -1
    } else {
        return None;
    };
    let admitted = match section.direction {
        Direction::Rising => sign > 0,
        Direction::Falling => sign < 0,
        Direction::Either => true,
    };
    if !admitted {
        return None;
    }
    for _ in 0..200 {
        if b - a <= 1e-13 * (1.0 + b.abs()) {
            break;
        }
        let m = 0.5 * (a + b);
        traj.interpolate_into(m, buf);
        let gm = buf[xi] - section.anchor_x;
        if gm == 0.0 {
            a = m;
            b = m;
            break;
        }
        if gm.signum() == g_a.signum() {
            a = m;
            g_a = gm;
        } else {
            b = m;
        }
    }
    let t = 0.5 * (a + b);
    traj.interpolate_into(t, buf);
    section
        .in_window(buf[base + Y], buf[base + Z])
        .then(|| EventRecord { id: kind_id(section.kind), t, state: buf.to_vec(), direction: sign })
}

/// Crossings of `x_i = anchor_x` for the oscillator `oscillator` in the
/// section's direction and inside its `(y, z)` window, localized by
/// bisection on the Hermite interpolant.
pub fn detect_crossings_for(
    traj: &Trajectory,
    section: &PoincareSection,
    oscillator: usize,
) -> Result<Vec<EventRecord>> {
    let base = 5 * oscillator;
    if base + 5 > traj.dim {
        return Err(Error::Argument(format!(
            "oscillator {oscillator} has no x axis in a trajectory of dimension {}",
            traj.dim
        )));
    }
    let xi = base + X;
    let mut buf = vec![0.0; traj.dim];
    let mut out = Vec::new();
    for i in 0..traj.len().saturating_sub(1) {
        // sub-sample each step so that a double crossing inside one step is seen
        let (t0, t1) = (traj.times[i], traj.times[i + 1]);
        let mut ta = t0;
        let mut ga = traj.state(i)[xi] - section.anchor_x;
        for q in 1..=SUBSAMPLES {
            let tb = if q == SUBSAMPLES { t1 } else { t0 + (t1 - t0) * q as f64 / SUBSAMPLES as f64 };
            let gb = if q == SUBSAMPLES {
                traj.state(i + 1)[xi] - section.anchor_x
            } else {
                traj.interpolate_into(tb, &mut buf);
                buf[xi] - section.anchor_x
            };
            if let Some(rec) = localize(traj, section, xi, base, (ta, ga), (tb, gb), &mut buf) {
                out.push(rec);
            }
            ta = tb;
            ga = gb;
        }
    }
    Ok(out)
}

/// Windowed crossings of `section` by its own oscillator, ordered by time.
pub fn detect_section_crossing(traj: &Trajectory, section: &PoincareSection) -> Result<Vec<EventRecord>> {
    detect_crossings_for(traj, section, section.oscillator)
}

/// Every `(entry time, pre-jump time)` pair: an entry crossing followed by
/// the next pre-jump crossing; the next pair starts after that pre-jump.
pub fn linger_passages(
    traj: &Trajectory,
    entry: &PoincareSection,
    pre_jump: &PoincareSection,
    oscillator: usize,
) -> Result<Vec<(f64, f64)>> {
    let ins = detect_crossings_for(traj, entry, oscillator)?;
    let pres = detect_crossings_for(traj, pre_jump, oscillator)?;
    let mut pairs = Vec::new();
    let mut after = f64::NEG_INFINITY;
    for e in &ins {
        if e.t <= after {
            continue;
        }
        if let Some(p) = pres.iter().find(|p| p.t > e.t) {
            pairs.push((e.t, p.t));
            after = p.t;
        } else {
            break;
        }
    }
    if pairs.is_empty() {
        return Err(Error::NotFound(format!(
            "no entry/pre-jump pair for oscillator {oscillator}: {} entry and {} pre-jump crossings",
            ins.len(),
            pres.len()
        )));
    }
    Ok(pairs)
}

/// Time from the first entry crossing to the next pre-jump crossing.
pub fn linger_time_empirical(
    traj: &Trajectory,
    entry: &PoincareSection,
    pre_jump: &PoincareSection,
    oscillator: usize,
) -> Result<f64> {
    let pairs = linger_passages(traj, entry, pre_jump, oscillator)?;
    Ok(pairs[0].1 - pairs[0].0)
}
