"""Named material presets (published scattering measurements, mm^-1)."""

from .dipole import OpticalMaterial

PRESETS = {
    "marble": OpticalMaterial(
        sigma_s_prime=[2.19, 2.62, 3.00], sigma_a=[0.0021, 0.0041, 0.0071], eta=1.5),
    "skin": OpticalMaterial(
        sigma_s_prime=[1.09, 1.59, 1.79], sigma_a=[0.013, 0.070, 0.145], eta=1.3),
    "skim-milk": OpticalMaterial(
        sigma_s_prime=[0.70, 1.22, 1.90], sigma_a=[0.0014, 0.0025, 0.0142], eta=1.3),
    "wax": OpticalMaterial(
        sigma_s_prime=[2.29, 2.39, 1.97], sigma_a=[0.003, 0.0034, 0.046], eta=1.44),
    "ketchup": OpticalMaterial(
        sigma_s_prime=[0.18, 0.07, 0.03], sigma_a=[0.061, 0.97, 1.0], eta=1.3),
}

DEFAULT_PRESET = "marble"


def get_preset(name: str) -> OpticalMaterial:
    try:
        return PRESETS[name]
    except KeyError:
        known = ", ".join(sorted(PRESETS))
        raise KeyError(f"unknown preset {name!r}; available: {known}") from None
