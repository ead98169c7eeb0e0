"""Single-sensor multi-target tracker: particle beliefs with existence
probabilities, measurement-driven track birth, and loopy-BP data association.

One :class:`Tracker` is a mutable state machine holding a list of potential
targets (PTs). Each scan is processed as predict -> associate -> update ->
prune/detect. The association step runs iterative message passing between
track-oriented and measurement-oriented association variables and returns
approximate marginals; the update step folds the resulting extrinsic messages
into per-particle weights and existence probabilities.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .model import (
    FILTER,
    TWO_PI,
    MotionModel,
    Sensor,
    clutter_density,
    detection_probs,
    likelihood_matrix,
    particle_polar,
    wrap_angle,
)

# Floor for the clutter intensity used in likelihood ratios, so that
# clutter-free configurations (mu_c = 0) stay finite.
_CLUTTER_FLOOR = 1e-12

# Existence probabilities are capped just below 1 to keep the miss-detection
# branch of the association weights strictly positive.
_MAX_EXISTENCE = 1.0 - 1e-12


@dataclass
class TrackerParams:
    """Filter-side tuning knobs (thresholds, birth model, BP schedule)."""

    n_particles: int = 10000
    p_th: float = 0.5
    p_prune: float = 1e-5
    mu_n: float = 0.01
    gamma: float = 0.5
    bp_max_iter: int = 50
    bp_tol: float = 1e-6
    birth_vel_std: float = 2.0
    birth_inflation: float = 2.0

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        if not 0.0 < self.p_prune < self.p_th < 1.0:
            raise ValueError("need 0 < p_prune < p_th < 1")
        if self.mu_n < 0:
            raise ValueError("mu_n must be >= 0")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")


@dataclass
class ParticleBelief:
    """Weighted particle representation of one PT's kinematic density."""

    particles: np.ndarray  # (N, 4)
    weights: np.ndarray    # (N,), nonnegative, sums to 1

    def position_mean(self) -> np.ndarray:
        return self.weights @ self.particles[:, :2]

    def velocity_mean(self) -> np.ndarray:
        return self.weights @ self.particles[:, 2:]

    def copy(self) -> "ParticleBelief":
        return ParticleBelief(self.particles.copy(), self.weights.copy())


@dataclass
class PotentialTarget:
    label: tuple
    existence: float
    belief: ParticleBelief
    kind: str = "legacy"  # "legacy" or "new"


@dataclass
class MarginalAssoc:
    """Approximate association marginals from loopy BP.

    ``p_a[j]`` is the distribution of legacy PT j's association over
    {0 (missed), 1..M}; ``p_b0[m]`` the probability that measurement m is not
    claimed by any legacy PT. ``nu`` holds the converged measurement-to-target
    messages, which the belief update consumes directly.
    """

    p_a: np.ndarray   # (J, M+1)
    p_b0: np.ndarray  # (M,)
    nu: np.ndarray    # (J, M)


@dataclass
class TrackEstimate:
    label: tuple
    position: np.ndarray
    velocity: np.ndarray
    existence: float


def effective_clutter(z, s: Sensor) -> float:
    """Clutter intensity used in likelihood ratios.

    Inside the FoV this equals c(z); measurements pushed marginally out of
    range by noise reuse the in-FoV uniform value instead of dividing by zero.
    """
    c = clutter_density(z, s)
    if c > 0.0:
        return c
    if s.mu_c > 0.0:
        return s.mu_c / (s.fov_radius * TWO_PI)
    return _CLUTTER_FLOOR


def predict(pts, m: MotionModel, rng) -> list:
    """Propagate every PT one step: particles through the motion model with
    fresh process noise, existence scaled by the survival probability."""
    if not pts:
        return []
    f = m.transition_matrix().T
    chol = m.noise_chol().T
    # All beliefs share one particle count, so noise is drawn in a single
    # batch; fall back to per-PT draws if a caller mixed sizes.
    shapes = {pt.belief.particles.shape for pt in pts}
    if len(shapes) == 1:
        stack = np.stack([pt.belief.particles for pt in pts]) @ f
        if m.sigma_v > 0:
            stack += rng.standard_normal(stack.shape) @ chol
        return [PotentialTarget(pt.label, pt.existence * m.p_s,
                                ParticleBelief(stack[i], pt.belief.weights.copy()),
                                "legacy")
                for i, pt in enumerate(pts)]
    out = []
    for pt in pts:
        particles = pt.belief.particles @ f
        if m.sigma_v > 0:
            particles = particles + rng.standard_normal(particles.shape) @ chol
        belief = ParticleBelief(particles, pt.belief.weights.copy())
        out.append(PotentialTarget(pt.label, pt.existence * m.p_s, belief, "legacy"))
    return out


def _legacy_terms(pt: PotentialTarget, Z, s: Sensor):
    """Per-particle detection probabilities and likelihood ratios kappa[p, m] =
    p_d(x_p) f(z_m | x_p) / c(z_m)."""
    polar = particle_polar(pt.belief.particles, s)
    pd = detection_probs(pt.belief.particles, s, FILTER, polar=polar)
    lik = likelihood_matrix(pt.belief.particles, Z, s, polar=polar)
    c = np.array([effective_clutter(z, s) for z in Z])
    kappa = pd[:, None] * lik / c[None, :] if len(Z) else np.zeros((len(pd), 0))
    return pd, kappa


def _all_legacy_terms(pts, Z, s: Sensor) -> list:
    """``_legacy_terms`` for every PT at once; when all beliefs share one
    particle count the polar/likelihood work runs on a single stacked array."""
    if not pts:
        return []
    if len({pt.belief.particles.shape for pt in pts}) != 1:
        return [_legacy_terms(pt, Z, s) for pt in pts]
    j_n = len(pts)
    n = pts[0].belief.particles.shape[0]
    flat = np.concatenate([pt.belief.particles for pt in pts])
    polar = particle_polar(flat, s)
    pd = detection_probs(flat, s, FILTER, polar=polar).reshape(j_n, n)
    lik = likelihood_matrix(flat, Z, s, polar=polar).reshape(j_n, n, len(Z))
    if len(Z):
        c = np.array([effective_clutter(z, s) for z in Z])
        kappa = pd[:, :, None] * lik / c[None, None, :]
    else:
        kappa = np.zeros((j_n, n, 0))
    return [(pd[j], kappa[j]) for j in range(j_n)]


def legacy_weights(pt: PotentialTarget, Z, s: Sensor) -> np.ndarray:
    """Association weights beta[0..M] for one legacy PT.

    beta[0] carries both the nonexistence mass and the existing-but-missed
    mass; beta[m] the particle-marginalized detection mass for measurement m.
    """
    pd, kappa = _legacy_terms(pt, Z, s)
    w = pt.belief.weights
    r = pt.existence
    beta = np.empty(len(Z) + 1)
    beta[0] = (1.0 - r) + r * float(w @ (1.0 - pd))
    if len(Z):
        beta[1:] = r * (w @ kappa)
    return beta


def birth_prior(z, s: Sensor, p: TrackerParams, rng) -> ParticleBelief:
    """Measurement-directed birth proposal for a candidate new target.

    Positions are drawn by inverting the measurement with inflated noise
    (inflation keeps the importance correction in :func:`new_weights`
    well behaved); velocities are zero-mean Gaussian. Weights are uniform.
    """
    n = p.n_particles
    kr = max(p.birth_inflation * s.sigma_r, 1e-12)
    kt = max(p.birth_inflation * s.sigma_theta, 1e-12)
    r = z.range + kr * rng.standard_normal(n)
    bad = r < 0
    while bad.any():
        r[bad] = z.range + kr * rng.standard_normal(int(bad.sum()))
        bad = r < 0
    th = wrap_angle(z.azimuth + kt * rng.standard_normal(n))
    particles = np.empty((n, 4))
    particles[:, 0] = s.pos[0] + r * np.cos(th)
    particles[:, 1] = s.pos[1] + r * np.sin(th)
    particles[:, 2:] = p.birth_vel_std * rng.standard_normal((n, 2))
    return ParticleBelief(particles, np.full(n, 1.0 / n))


def _birth_importance(z, s: Sensor, p: TrackerParams, particles: np.ndarray):
    """Importance ratios f_n(x)/q(x) and likelihoods f(z|x) for birth particles.

    The birth intensity f_n is uniform over the FoV disc (velocity prior equal
    to the proposal's, so it cancels); q is the measurement-inversion proposal
    density of :func:`birth_prior` expressed in Cartesian coordinates.
    """
    rp, thp = particle_polar(particles, s)
    rp = np.maximum(rp, 1e-9)
    kr = max(p.birth_inflation * s.sigma_r, 1e-12)
    kt = max(p.birth_inflation * s.sigma_theta, 1e-12)
    dr = (rp - z.range) / kr
    da = wrap_angle(thp - z.azimuth) / kt
    q = np.exp(-0.5 * (dr ** 2 + da ** 2)) / (TWO_PI * kr * kt) / rp
    fn = np.where(rp <= s.fov_radius, 1.0 / (np.pi * s.fov_radius ** 2), 0.0)
    ratio = fn / q
    lik = likelihood_matrix(particles, [z], s)[:, 0]
    return ratio, lik


def _birth_terms(z, s: Sensor, p: TrackerParams, birth: ParticleBelief):
    """(xi, per-particle posterior weight factors) for one birth candidate."""
    ratio, lik = _birth_importance(z, s, p, birth.particles)
    rl = ratio * lik
    xi = 1.0 + p.mu_n / effective_clutter(z, s) * float(np.mean(rl))
    return xi, rl


def new_weights(z, s: Sensor, p: TrackerParams, birth: ParticleBelief) -> float:
    """Association weight xi for one measurement's candidate new target.

    The constant 1 is the combined clutter/nonexistence mass; the second term
    is the birth-intensity-marginalized likelihood, estimated on the birth
    particles with importance correction toward the uniform-in-FoV intensity.
    """
    return _birth_terms(z, s, p, birth)[0]


def loopy_association(beta: np.ndarray, xi: np.ndarray, p: TrackerParams) -> MarginalAssoc:
    """Iterative message passing on the association graph.

    Messages: phi[j, m] from PT j to measurement m, nu[m, j] back. Initialized
    at nu = 1, iterated until the largest message change falls below bp_tol or
    bp_max_iter sweeps have run (tree-structured instances converge exactly).
    """
    beta = np.asarray(beta, dtype=float)
    j_n, m1 = beta.shape
    m_n = m1 - 1
    if j_n == 0 or m_n == 0:
        p_a = beta / beta.sum(axis=1, keepdims=True) if j_n else np.zeros((0, m1))
        return MarginalAssoc(p_a, np.ones(m_n), np.ones((j_n, m_n)))
    bm = beta[:, 1:]
    b0 = beta[:, 0][:, None]
    nu = np.ones((j_n, m_n))
    phi = np.zeros((j_n, m_n))
    for _ in range(p.bp_max_iter):
        prod = bm * nu
        phi = bm / (b0 + prod.sum(axis=1, keepdims=True) - prod)
        tot = xi[None, :] + phi.sum(axis=0, keepdims=True)
        nu_next = 1.0 / (tot - phi)
        delta = float(np.max(np.abs(nu_next - nu)))
        nu = nu_next
        if delta < p.bp_tol:
            break
    unnorm = np.concatenate([b0, bm * nu], axis=1)
    p_a = unnorm / unnorm.sum(axis=1, keepdims=True)
    p_b0 = xi / (xi + phi.sum(axis=0))
    return MarginalAssoc(p_a, p_b0, nu)


def resample(b: ParticleBelief, rng, n_out: int | None = None) -> ParticleBelief:
    """Systematic resampling to ``n_out`` equally weighted particles."""
    total = b.weights.sum()
    if not total > 0:
        raise ValueError("cannot resample a belief with zero total weight")
    n_out = n_out if n_out is not None else len(b.weights)
    cum = np.cumsum(b.weights / total)
    cum[-1] = 1.0
    positions = (rng.random() + np.arange(n_out)) / n_out
    idx = np.searchsorted(cum, positions)
    return ParticleBelief(b.particles[idx], np.full(n_out, 1.0 / n_out))


def update_legacy(pt: PotentialTarget, assoc_nu: np.ndarray, Z, s: Sensor, rng,
                  terms=None) -> PotentialTarget:
    """Fold the extrinsic association messages into one legacy PT.

    Particle weights pick up the miss branch plus the message-weighted
    detection branches; the existence posterior balances the surviving
    detected/missed mass against the nonexistence mass. A numerically dead
    belief (total weight ~ 0) zeroes the existence and keeps the prediction.
    """
    pd, kappa = terms if terms is not None else _legacy_terms(pt, Z, s)
    w = pt.belief.weights
    r = pt.existence
    gain = (1.0 - pd) + (kappa @ assoc_nu if len(Z) else 0.0)
    w_new = w * gain
    mass = float(w_new.sum())
    num = r * mass
    den = num + (1.0 - r)
    if not np.isfinite(mass) or mass <= 1e-300 or den <= 0.0:
        return PotentialTarget(pt.label, 0.0, pt.belief, "legacy")
    existence = min(num / den, _MAX_EXISTENCE)
    belief = resample(ParticleBelief(pt.belief.particles, w_new), rng)
    return PotentialTarget(pt.label, existence, belief, "legacy")


def update_new(z, xi: float, p_b0: float, birth: ParticleBelief, s: Sensor,
               p: TrackerParams, rng, label: tuple, rl=None) -> PotentialTarget:
    """Build the posterior PT for one measurement's birth candidate; ``rl``
    optionally supplies the precomputed importance-times-likelihood factors."""
    existence = p_b0 * (xi - 1.0) / xi if xi > 1.0 else 0.0
    if rl is None:
        ratio, lik = _birth_importance(z, s, p, birth.particles)
        rl = ratio * lik
    w = birth.weights * rl
    if w.sum() > 0:
        belief = resample(ParticleBelief(birth.particles, w), rng)
    else:
        existence = 0.0
        belief = birth.copy()
    return PotentialTarget(label, min(existence, _MAX_EXISTENCE), belief, "new")


def prune_and_detect(pts, params: TrackerParams):
    """Drop PTs below the pruning threshold; emit estimates above detection.

    Both comparisons are strict, so a PT sitting exactly on a threshold is
    retained but not reported.
    """
    kept, estimates = [], []
    for pt in pts:
        if pt.existence < params.p_prune:
            continue
        kept.append(pt)
        if pt.existence > params.p_th:
            estimates.append(TrackEstimate(pt.label, pt.belief.position_mean(),
                                           pt.belief.velocity_mean(), pt.existence))
    return kept, estimates


class Tracker:
    """Per-sensor (or fusion-center) BP-MTT filter state."""

    def __init__(self, tracker_id, motion: MotionModel, params: TrackerParams, rng):
        self.id = tracker_id
        self.motion = motion
        self.params = params
        self.rng = rng
        self.pts: list[PotentialTarget] = []
        self._label_counter = 0
        self.last_legacy_labels: list[tuple] = []

    def new_label(self) -> tuple:
        self._label_counter += 1
        return (self.id, self._label_counter)

    def predict(self):
        self.pts = predict(self.pts, self.motion, self.rng)

    def update(self, Z, sensor: Sensor, allow_births: bool = True) -> MarginalAssoc:
        """One association + belief update pass against sensor ``sensor``.

        New PTs spawned here are eligible as legacy PTs in any later pass of
        the same step (sequential multi-sensor processing). Returns the
        association marginals; rows follow ``last_legacy_labels``.
        """
        Z = list(Z)
        p = self.params
        j_n, m_n = len(self.pts), len(Z)
        self.last_legacy_labels = [pt.label for pt in self.pts]

        terms = _all_legacy_terms(self.pts, Z, sensor)
        beta = np.empty((j_n, m_n + 1))
        for j, (pt, (pd, kappa)) in enumerate(zip(self.pts, terms)):
            w = pt.belief.weights
            r = pt.existence
            beta[j, 0] = (1.0 - r) + r * float(w @ (1.0 - pd))
            if m_n:
                beta[j, 1:] = r * (w @ kappa)

        births = None
        xi = np.ones(m_n)
        if allow_births and p.mu_n > 0 and m_n:
            births = [birth_prior(z, sensor, p, self.rng) for z in Z]
            birth_terms = [_birth_terms(z, sensor, p, b) for z, b in zip(Z, births)]
            xi = np.array([t[0] for t in birth_terms])

        assoc = loopy_association(beta, xi, p)

        updated = [update_legacy(pt, assoc.nu[j], Z, sensor, self.rng, terms=terms[j])
                   for j, pt in enumerate(self.pts)]
        if births is not None:
            for m, (z, b) in enumerate(zip(Z, births)):
                updated.append(update_new(z, xi[m], assoc.p_b0[m], b, sensor, p,
                                          self.rng, self.new_label(),
                                          rl=birth_terms[m][1]))
        self.pts = updated
        return assoc

    def prune_and_detect(self) -> list[TrackEstimate]:
        self.pts, estimates = prune_and_detect(self.pts, self.params)
        return estimates

    def step(self, Z, sensor: Sensor):
        """Full per-scan pipeline; returns (estimates, association marginals)."""
        self.predict()
        assoc = self.update(Z, sensor)
        estimates = self.prune_and_detect()
        return estimates, assoc

    def state_digest(self) -> str:
        """Hash of the full PT state, for determinism and protocol audits."""
        h = hashlib.sha1()
        for pt in self.pts:
            h.update(repr(pt.label).encode())
            h.update(np.float64(pt.existence).tobytes())
            h.update(np.ascontiguousarray(pt.belief.particles).tobytes())
            h.update(np.ascontiguousarray(pt.belief.weights).tobytes())
        return h.hexdigest()
