"""Dipole diffuse-scattering evaluation and Fresnel terms.

All distances are millimeters; scattering/absorption coefficients are mm^-1,
so the radial response R_d comes out in mm^-2. RGB channels are independent
scalar pipelines; a channel index selects one channel of the material.

Note on the transport constants: sigma_t' = sigma_s' + sigma_a and
sigma_tr = sqrt(3 sigma_a sigma_t'), i.e. the classical diffusion-dipole
forms. (Some write-ups swap sigma_a for sigma_s in these two definitions,
which would leave the absorption coefficient unused; we keep the standard
forms.)
"""

from dataclasses import dataclass

import numpy as np

_CHANNELS = ("r", "g", "b")


def _as_rgb(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = np.repeat(arr[None], 3)
    if arr.shape != (3,):
        raise ValueError(f"{name} must be a scalar or length-3 per-channel array")
    return arr


@dataclass(frozen=True)
class OpticalMaterial:
    """Editable translucent material: per-channel sigma_s', sigma_a, plus g, eta."""

    sigma_s_prime: np.ndarray
    sigma_a: np.ndarray
    g: float = 0.0
    eta: float = 1.3

    def __post_init__(self):
        object.__setattr__(self, "sigma_s_prime", _as_rgb(self.sigma_s_prime, "sigma_s_prime"))
        object.__setattr__(self, "sigma_a", _as_rgb(self.sigma_a, "sigma_a"))
        if not np.all(self.sigma_s_prime > 0.0) or not np.all(np.isfinite(self.sigma_s_prime)):
            raise ValueError("sigma_s_prime must be positive and finite per channel")
        if not np.all(self.sigma_a > 0.0) or not np.all(np.isfinite(self.sigma_a)):
            raise ValueError("sigma_a must be positive and finite per channel")
        if not -1.0 < self.g < 1.0:
            raise ValueError("g must lie in (-1, 1)")
        if not 1.0 <= self.eta <= 3.0:
            raise ValueError("eta must lie in [1.0, 3.0]")

    def channel(self, c: int) -> tuple[float, float]:
        return float(self.sigma_s_prime[c]), float(self.sigma_a[c])

    def to_dict(self) -> dict:
        return {
            "sigma_s_prime": self.sigma_s_prime.tolist(),
            "sigma_a": self.sigma_a.tolist(),
            "g": self.g,
            "eta": self.eta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OpticalMaterial":
        return cls(
            sigma_s_prime=np.asarray(d["sigma_s_prime"], np.float64),
            sigma_a=np.asarray(d["sigma_a"], np.float64),
            g=float(d.get("g", 0.0)),
            eta=float(d.get("eta", 1.3)),
        )


@dataclass(frozen=True)
class DipoleDerived:
    """Single-channel transport constants feeding eval_rd."""

    sigma_t_prime: float
    alpha_prime: float
    sigma_tr: float
    z_r: float
    z_v: float
    a_boundary: float
    f_dr: float


def fdr(eta: float) -> float:
    """Polynomial approximation of the diffuse Fresnel reflectance."""
    if not eta > 0.0 or not np.isfinite(eta):
        raise ValueError("eta must be positive and finite")
    return -1.440 / (eta * eta) + 0.710 / eta + 0.668 + 0.0636 * eta


def derive_dipole(material: OpticalMaterial, channel: int) -> DipoleDerived:
    """Transport constants for one color channel of a material."""
    if channel not in (0, 1, 2):
        raise ValueError("channel must be 0, 1 or 2")
    sp, sa = material.channel(channel)
    return derive_dipole_raw(sp, sa, material.eta)


def derive_dipole_raw(sigma_s_prime: float, sigma_a: float, eta: float) -> DipoleDerived:
    st = sigma_s_prime + sigma_a
    ap = sigma_s_prime / st
    f = fdr(eta)
    if f >= 1.0:
        raise ValueError("F_dr >= 1 would make the boundary term non-finite")
    a_boundary = (1.0 + f) / (1.0 - f)
    z_r = 1.0 / st
    return DipoleDerived(
        sigma_t_prime=st,
        alpha_prime=ap,
        sigma_tr=np.sqrt(3.0 * sigma_a * st),
        z_r=z_r,
        z_v=z_r * (1.0 + 4.0 * a_boundary / 3.0),
        a_boundary=a_boundary,
        f_dr=f,
    )


def eval_rd(derived: DipoleDerived, r):
    """Diffuse scattering response at surface distance r (mm), in mm^-2.

    Vectorized over r; finite and strictly positive for any r >= 0 because
    the source depths bound both dipole distances away from zero.
    """
    r = np.asarray(r, dtype=np.float64)
    d_r = np.sqrt(r * r + derived.z_r * derived.z_r)
    d_v = np.sqrt(r * r + derived.z_v * derived.z_v)
    s = derived.sigma_tr
    term_r = derived.z_r * (s + 1.0 / d_r) * np.exp(-s * d_r) / (d_r * d_r)
    term_v = derived.z_v * (s + 1.0 / d_v) * np.exp(-s * d_v) / (d_v * d_v)
    out = derived.alpha_prime / (4.0 * np.pi) * (term_r + term_v)
    return float(out) if out.ndim == 0 else out


def fresnel_transmittance(eta: float, cos_theta):
    """1 - F_r for an unpolarized dielectric interface.

    cos_theta is the cosine on the incident side; total internal reflection
    (possible when eta < 1) returns 0.
    """
    ci = np.clip(np.asarray(cos_theta, dtype=np.float64), 0.0, 1.0)
    if eta == 1.0:
        out = np.ones_like(ci)
        return float(out) if out.ndim == 0 else out
    sin2_t = (1.0 - ci * ci) / (eta * eta)
    tir = sin2_t >= 1.0
    ct = np.sqrt(np.maximum(1.0 - sin2_t, 0.0))
    rs = (ci - eta * ct) / (ci + eta * ct + 1e-300)
    rp = (eta * ci - ct) / (eta * ci + ct + 1e-300)
    ft = 1.0 - 0.5 * (rs * rs + rp * rp)
    out = np.where(tir, 0.0, np.clip(ft, 0.0, 1.0))
    return float(out) if out.ndim == 0 else out
