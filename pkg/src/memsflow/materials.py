from dataclasses import dataclass
import re

IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_.\-]*\Z")


@dataclass(frozen=True)
class Material:
    """Isotropic linear-elastic material."""

    name: str
    youngs_modulus: float  # Pa
    poisson_ratio: float
    density: float  # kg/m^3

    def __post_init__(self):
        if not IDENT.match(self.name):
            raise ValueError(f"bad material name {self.name!r}")
        if not self.youngs_modulus > 0:
            raise ValueError(f"{self.name}: Young's modulus must be positive")
        if not self.density > 0:
            raise ValueError(f"{self.name}: density must be positive")
        if not 0 <= self.poisson_ratio < 0.5:
            raise ValueError(f"{self.name}: Poisson ratio must lie in [0, 0.5)")

    @property
    def shear_modulus(self):
        return self.youngs_modulus / (2.0 * (1.0 + self.poisson_ratio))

    def to_line(self):
        return (f"material {self.name} E={self.youngs_modulus!r} "
                f"nu={self.poisson_ratio!r} rho={self.density!r}")


SILICON = Material("si", 160e9, 0.22, 2330.0)
OXIDE = Material("sio2", 70e9, 0.17, 2200.0)
