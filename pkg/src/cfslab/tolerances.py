"""Named numerical tolerances shared by all modules.

Every report embeds the tolerance set it was produced with, and the command
line accepts ``--tol NAME=VALUE`` overrides for any field below.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace


@dataclass(frozen=True)
class Tolerances:
    # cfs-core
    hermitian: float = 1e-12       # relative Hermiticity residual of a point operator
    sigma: float = 1e-9            # relative eigenvalue cutoff for rank/signature decisions
    class_tol: float = 1e-8        # relative tolerance of the causal classification
    eigen: float = 1e-8            # spectrum comparisons
    volume: float = 1e-12          # volume constraint
    el: float = 1e-6               # EL function residual at a minimizer
    gtol: float = 1e-6             # FD gradient norm for criticality
    # variations
    degen: float = 1e-6            # relative spectral gap below which perturbation theory is disabled
    fd: float = 1e-5               # first-derivative FD oracles (relative)
    fd2: float = 1e-4              # second-derivative FD oracles (relative)
    q_sym: float = 1e-8            # Q kernel symmetry residual
    pos: float = 1e-6              # positivity margins (relative to scale)
    assembly: float = 1e-12        # lfe + q + R vs total bookkeeping
    # wave-solver
    rank: float = 1e-10            # pseudo-inverse threshold relative to max |eigenvalue|
    admissible: float = 1e-8       # distance of an inhomogeneity from range(Q)
    solve: float = 1e-9            # residual of a strip solve
    hom: float = 1e-9              # interior homogeneity of boundary-driven solutions
    cip: float = 1e-8              # vanishing commutator norm (relative to scale)
    cons: float = 1e-8             # conservation drift (relative to scale)
    psd: float = 1e-10             # Gram positivity (relative)
    kernel_neutral: float = 1e-10  # kernel vector neutrality in the extended Gram (relative)
    couple: float = 1e-10          # coupling iteration stopping norm (relative)
    range_tol: float = 0.0         # finite time range check on |Q|
    # dirac example
    grid: float = 1e-12
    quad: float = 1e-10
    lightcone: float = 1e-12

    def with_overrides(self, overrides: dict[str, float]) -> "Tolerances":
        known = {f.name for f in fields(self)}
        unknown = sorted(set(overrides) - known)
        if unknown:
            raise KeyError(f"unknown tolerance name(s): {', '.join(unknown)}")
        return replace(self, **{k: float(v) for k, v in overrides.items()})

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


DEFAULT = Tolerances()
