//! Multi-start solver for the small model-based subproblems.
//!
//! The smooth part (model objective and model constraints over the box) is
//! handled by an augmented Lagrangian with projected-gradient inner steps. The
//! Lipschitz guard enters the Lagrangian as well, and is then enforced exactly
//! by pulling the step back toward `u_k`: every increment used by the guard is
//! positively homogeneous in `u − u_k`, so the largest admissible fraction of
//! the step has a closed form.

use rand::Rng;

use crate::bounds::LipschitzSpec;
use crate::geometry::{BoxDomain, Point};

/// Guards are satisfied with at least this much slack after restoration.
pub const GUARD_SLACK: f64 = 1e-10;
/// Largest model-constraint violation accepted from the inner solver.
const FEAS_TOL: f64 = 1e-7;
const OUTER_ITERS: usize = 40;
const INNER_ITERS: usize = 200;

/// Value and gradient of a smooth function.
pub type Smooth<'a> = Box<dyn Fn(&[f64]) -> (f64, Vec<f64>) + 'a>;

/// `offset_j + inc_j(center → u) ≤ 0` for every `j`, where `inc_j` is the
/// upper-bound increment of `specs[j]` and `offset_j` is the (upper bound on
/// the) constraint value at `center` plus any back-off.
#[derive(Debug, Clone)]
pub struct GuardSpec {
    pub center: Point,
    pub offsets: Vec<f64>,
    pub specs: Vec<LipschitzSpec>,
}

impl GuardSpec {
    fn increments(&self, u: &[f64]) -> Vec<f64> {
        let p = Point::from_vec_unchecked(u.to_vec());
        self.specs
            .iter()
            .map(|s| s.upper_increment(&self.center, &p).unwrap_or(f64::INFINITY))
            .collect()
    }

    /// Per-constraint guard values at `u`; `≤ 0` passes.
    pub fn margins(&self, u: &[f64]) -> Vec<f64> {
        self.offsets
            .iter()
            .zip(self.increments(u))
            .map(|(o, i)| o + i)
            .collect()
    }

    /// Guard value and gradient for constraint `j` in closed form, when the
    /// increment is a plain lumped or plain directional one. At a kink the
    /// gradient is the midpoint of the one-sided slopes.
    fn term(&self, j: usize, u: &[f64]) -> Option<(f64, Vec<f64>)> {
        let s = &self.specs[j];
        let c = self.center.coords();
        let p = Point::from_vec_unchecked(u.to_vec());
        if let Some(d) = &s.directional {
            if !(d.domain().contains(&self.center) && d.domain().contains(&p)) {
                return s.lumped.is_some().then(|| self.lumped_term(j, u)).flatten();
            }
            if s.curvature.is_some() || s.deriv_bounds.is_some() {
                return None;
            }
            let (mut v, mut grad) = (self.offsets[j], Vec::with_capacity(u.len()));
            for i in 0..u.len() {
                let (lo, hi) = (d.lower()[i], d.upper()[i]);
                let delta = u[i] - c[i];
                v += (lo * delta).max(hi * delta);
                grad.push(if delta > 0.0 {
                    hi
                } else if delta < 0.0 {
                    lo
                } else {
                    0.5 * (lo + hi)
                });
            }
            return Some((v, grad));
        }
        self.lumped_term(j, u)
    }

    fn lumped_term(&self, j: usize, u: &[f64]) -> Option<(f64, Vec<f64>)> {
        let k = self.specs[j].lumped?.value();
        let c = self.center.coords();
        let r = crate::geometry::euclidean(u, c);
        let grad = if r > 0.0 {
            u.iter().zip(c).map(|(a, b)| k * (a - b) / r).collect()
        } else {
            vec![0.0; u.len()]
        };
        Some((self.offsets[j] + k * r, grad))
    }

    /// Central-difference fallback for [`GuardSpec::term`].
    fn fd_term(&self, j: usize, u: &[f64]) -> (f64, Vec<f64>) {
        let at = |x: &[f64]| self.margins(x)[j];
        let h = 1e-7;
        let mut x = u.to_vec();
        let grad = (0..u.len())
            .map(|i| {
                x[i] = u[i] + h;
                let up = at(&x);
                x[i] = u[i] - h;
                let dn = at(&x);
                x[i] = u[i];
                (up - dn) / (2.0 * h)
            })
            .collect();
        (at(u), grad)
    }

    /// Can the guard hold anywhere? It holds at `center` iff every offset is nonpositive.
    pub fn satisfiable(&self) -> bool {
        self.offsets.iter().all(|o| *o <= -GUARD_SLACK)
    }

    /// Largest `t ∈ [0, 1]` with `center + t(u − center)` passing with slack.
    pub fn admissible_fraction(&self, u: &[f64]) -> f64 {
        let mut t = 1.0f64;
        for (o, inc) in self.offsets.iter().zip(self.increments(u)) {
            let room = -o - GUARD_SLACK;
            if room <= 0.0 {
                return 0.0;
            }
            if inc > room {
                t = t.min(room / inc);
            }
        }
        t
    }

    /// Pulls `u` back toward the center until the guard holds.
    pub fn restore(&self, u: &[f64]) -> Vec<f64> {
        let t = self.admissible_fraction(u);
        if t >= 1.0 {
            return u.to_vec();
        }
        let c = self.center.coords();
        // shave a hair off t so rounding in the lerp cannot cross the boundary
        let t = (t * (1.0 - 1e-12)).max(0.0);
        c.iter().zip(u).map(|(a, b)| a + t * (b - a)).collect()
    }
}

/// `minimize objective(u)` subject to `constraints_j(u) ≤ 0`, the box, and the guard.
pub struct Subproblem<'a> {
    pub domain: &'a BoxDomain,
    pub objective: Smooth<'a>,
    pub constraints: Vec<Smooth<'a>>,
    pub guard: Option<GuardSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub u: Point,
    pub objective: f64,
    /// False when no start reached a point satisfying the model constraints
    /// (or the guard cannot hold); `u` is then the reference point.
    pub feasible: bool,
}

impl<'a> Subproblem<'a> {
    fn guard_terms(&self, u: &[f64]) -> Vec<(f64, Vec<f64>)> {
        let Some(g) = &self.guard else {
            return Vec::new();
        };
        (0..g.specs.len())
            .map(|j| g.term(j, u).unwrap_or_else(|| g.fd_term(j, u)))
            .collect()
    }

    fn all_constraints(&self, u: &[f64]) -> Vec<(f64, Vec<f64>)> {
        let mut out: Vec<(f64, Vec<f64>)> = self.constraints.iter().map(|c| c(u)).collect();
        out.extend(self.guard_terms(u));
        out
    }

    fn model_violation(&self, u: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| c(u).0)
            .fold(0.0, f64::max)
    }

    fn lagrangian(&self, u: &[f64], mu: &[f64], rho: f64) -> (f64, Vec<f64>) {
        let (mut val, mut grad) = self.objective.as_ref()(u);
        for ((c, cg), m) in self.all_constraints(u).into_iter().zip(mu) {
            let s = m + rho * c;
            if s > 0.0 {
                val += (s * s - m * m) / (2.0 * rho);
                for (g, d) in grad.iter_mut().zip(&cg) {
                    *g += s * d;
                }
            } else {
                val -= m * m / (2.0 * rho);
            }
        }
        (val, grad)
    }

    fn project(&self, x: &mut [f64]) {
        self.domain.clip_in_place(x);
    }

    fn inner(&self, x0: &[f64], mu: &[f64], rho: f64) -> Vec<f64> {
        let mut x = x0.to_vec();
        self.project(&mut x);
        let (mut fx, mut gx) = self.lagrangian(&x, mu, rho);
        let mut step = 1.0 / gx.iter().map(|g| g.abs()).fold(1.0, f64::max);
        for _ in 0..INNER_ITERS {
            let mut accepted = None;
            let mut s = step;
            while s > 1e-16 {
                let mut y: Vec<f64> = x.iter().zip(&gx).map(|(a, g)| a - s * g).collect();
                self.project(&mut y);
                let d2: f64 = y.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum();
                if d2 == 0.0 {
                    break;
                }
                let (fy, gy) = self.lagrangian(&y, mu, rho);
                if fy <= fx - 1e-4 * d2 / s {
                    accepted = Some((y, fy, gy, d2));
                    break;
                }
                s *= 0.5;
            }
            let Some((y, fy, gy, d2)) = accepted else {
                break;
            };
            let sy: f64 = y
                .iter()
                .zip(&x)
                .zip(gy.iter().zip(&gx))
                .map(|((a, b), (c, d))| (a - b) * (c - d))
                .sum();
            step = if sy > 0.0 { (d2 / sy).clamp(1e-10, 1e10) } else { s * 2.0 };
            x = y;
            fx = fy;
            gx = gy;
            if d2 < 1e-24 {
                break;
            }
        }
        x
    }

    fn solve_from(&self, x0: &[f64]) -> Vec<f64> {
        let m = self.constraints.len() + self.guard.as_ref().map_or(0, |g| g.offsets.len());
        let mut mu = vec![0.0; m];
        let mut rho = 10.0;
        let mut x = x0.to_vec();
        let mut last_viol = f64::INFINITY;
        for _ in 0..OUTER_ITERS {
            x = self.inner(&x, &mu, rho);
            let cons = self.all_constraints(&x);
            let viol = cons.iter().map(|c| c.0).fold(0.0, f64::max);
            for (m, c) in mu.iter_mut().zip(&cons) {
                *m = (*m + rho * c.0).max(0.0);
            }
            if viol < FEAS_TOL * 1e-2 && (last_viol - viol).abs() < 1e-12 {
                break;
            }
            if viol > 0.25 * last_viol {
                rho = (rho * 4.0).min(1e8);
            }
            last_viol = viol;
        }
        x
    }

    /// Runs the local solver from `reference` and `n_random` uniform starts.
    ///
    /// Among starts meeting the model constraints, the lowest objective wins;
    /// near-ties go to the point closest to `reference`. The guard is then
    /// enforced exactly. If nothing is feasible, `reference` is returned.
    pub fn solve<R: Rng + ?Sized>(&self, reference: &Point, n_random: usize, rng: &mut R) -> Solution {
        let n = self.domain.dim();
        let mut starts = vec![reference.coords().to_vec()];
        for _ in 0..n_random {
            starts.push(
                (0..n)
                    .map(|i| {
                        let (l, u) = (self.domain.lower()[i], self.domain.upper()[i]);
                        if u > l {
                            rng.random_range(l..=u)
                        } else {
                            l
                        }
                    })
                    .collect(),
            );
        }
        let hold = Solution {
            u: reference.clone(),
            objective: self.objective.as_ref()(reference.coords()).0,
            feasible: false,
        };
        if let Some(g) = &self.guard {
            if !g.satisfiable() {
                return hold;
            }
        }
        let mut cands: Vec<(Vec<f64>, f64)> = Vec::with_capacity(starts.len());
        for s in &starts {
            let mut x = self.solve_from(s);
            if let Some(g) = &self.guard {
                x = g.restore(&x);
            }
            self.project(&mut x);
            if self.model_violation(&x) <= FEAS_TOL {
                let f = self.objective.as_ref()(&x).0;
                cands.push((x, f));
            }
        }
        let Some(best) = cands.iter().map(|c| c.1).min_by(|a, b| a.total_cmp(b)) else {
            return hold;
        };
        let tie = 1e-9 * best.abs().max(1.0);
        let r = reference.coords();
        let dist = |x: &[f64]| crate::geometry::euclidean(x, r);
        let (u, f) = cands
            .into_iter()
            .filter(|c| c.1 <= best + tie)
            .min_by(|a, b| dist(&a.0).total_cmp(&dist(&b.0)))
            .expect("best candidate is in the filtered set");
        Solution {
            u: Point::from_vec_unchecked(u),
            objective: f,
            feasible: true,
        }
    }
}
