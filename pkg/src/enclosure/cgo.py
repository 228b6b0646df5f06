"""Complex geometrical optics probes for a variable background.

The remainder eps solves Op(eps) = (tau a + b)(1 + eps), where Op is
Laplacian + 2 z . grad (spectral symbol -Q_z) or its lattice analogue
e^{-x.zeta}(L_1 - tau h^2)e^{x.zeta} / h^2. Both are inverted exactly on a
periodic padded grid; the zero frequency is carried by an affine term.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
import scipy.fft as sfft

from .background import Background
from .errors import ConfigError, NonContractionError, SolverError
from .grid import LD, Grid
from .probes import CLD, ProbeParams, ProbeSolution, _lattice_zeta_complex, make_complex_probe

DELTA = -0.5


@dataclass(frozen=True, eq=False)
class PaddedGrid:
    """Square periodic grid; node (i, j) sits at origin + h * (i, j)."""

    n: int
    h: float
    origin: tuple[float, float]
    region: tuple[float, float, float, float]

    def coords(self, dtype=float):
        hl = dtype(1) / dtype(round(1 / self.h)) if abs(1 / self.h - round(1 / self.h)) < 1e-12 else dtype(self.h)
        i = np.arange(self.n, dtype=dtype)
        return dtype(self.origin[0]) + hl * i, dtype(self.origin[1]) + hl * i

    def mesh(self, dtype=float):
        x, y = self.coords(dtype)
        return np.meshgrid(x, y, indexing="ij")

    @property
    def center(self) -> np.ndarray:
        x0, x1, y0, y1 = self.region
        return np.array([(x0 + x1) / 2, (y0 + y1) / 2])

    def region_mask(self, pad: float = 0.0) -> np.ndarray:
        X, Y = self.mesh()
        x0, x1, y0, y1 = self.region
        return (X >= x0 - pad) & (X <= x1 + pad) & (Y >= y0 - pad) & (Y <= y1 + pad)

    def frequencies(self, dtype=float):
        k = 2 * np.pi * sfft.fftfreq(self.n, d=self.h).astype(dtype)
        return np.meshgrid(k, k, indexing="ij")

    def weight(self) -> np.ndarray:
        X, Y = self.mesh()
        c = self.center
        return (1 + (X - c[0]) ** 2 + (Y - c[1]) ** 2) ** (DELTA / 2)


def _even_fast_len(n: int) -> int:
    n = sfft.next_fast_len(n)
    while n % 2:
        n = sfft.next_fast_len(n + 1)
    return n


def padded_grid(region, h: float, pad: float = 2.0, min_extent: float = 0.0) -> PaddedGrid:
    """Grid centred on `region`, at least `pad` times its larger side (and min_extent) wide."""
    x0, x1, y0, y1 = region
    extent = max(pad * max(x1 - x0, y1 - y0), min_extent)
    n = _even_fast_len(int(math.ceil(extent / h)))
    cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
    return PaddedGrid(n, h, (cx - n // 2 * h, cy - n // 2 * h), tuple(region))


def lattice_grid(grid: Grid, pad: float = 2.0, min_extent: float = 0.0) -> PaddedGrid:
    """Periodic lattice through the cell centres of a forward grid."""
    x0, x1, y0, y1 = grid.domain.bounds
    h = grid.h
    extent = max(pad * max(x1 - x0, y1 - y0), min_extent, max(x1 - x0, y1 - y0) + 4 * h)
    n = _even_fast_len(int(math.ceil(extent / h)))
    mx = (n - grid.nx) // 2
    my = (n - grid.ny) // 2
    return PaddedGrid(n, h, (x0 + h / 2 - mx * h, y0 + h / 2 - my * h), (x0, x1, y0, y1))


@dataclass(frozen=True, eq=False)
class PotentialPair:
    a: np.ndarray
    b: np.ndarray
    box: tuple[float, float, float, float] | None
    grid: PaddedGrid
    discrete: bool = False


def liouville_potentials(background: Background, pgrid: PaddedGrid, discrete: bool = False,
                         dtype=float) -> PotentialPair:
    """a = 1/gamma0 - 1 and b = Laplacian(sqrt gamma0)/sqrt gamma0 (analytic, or lattice if discrete)."""
    X, Y = pgrid.mesh(dtype)
    if background.is_constant:
        z = np.zeros(X.shape, dtype=dtype)
        return PotentialPair(z, z.copy(), None, pgrid, discrete)
    g0 = background.gamma0(X, Y).astype(dtype)
    if not np.all(g0 > 0):
        raise ConfigError("background conductivity must be positive")
    a = 1 / g0 - 1
    if discrete:
        s = np.sqrt(g0)
        lap = (np.roll(s, 1, 0) + np.roll(s, -1, 0) + np.roll(s, 1, 1) + np.roll(s, -1, 1) - 4 * s)
        hl = dtype(pgrid.h) if dtype is float else LD(1) / LD(round(1 / pgrid.h))
        b = lap / s / (hl * hl)
    else:
        b = background.potential(X, Y).astype(dtype)
    x0, x1, y0, y1 = background.box
    out = ~((X > x0) & (X < x1) & (Y > y0) & (Y < y1))
    if not discrete:
        b[out] = 0
    a[out] = 0
    return PotentialPair(a, b, background.box, pgrid, discrete)


def symbol_Q(z, xi1, xi2):
    """Q_z(xi) = |xi|^2 - 2i z . xi."""
    return xi1 ** 2 + xi2 ** 2 - 2j * (z[0] * xi1 + z[1] * xi2)


def zero_circle(params: ProbeParams) -> np.ndarray:
    """Real zeros of Q_z: the circle of radius c tau lam about -c tau lam omega_perp cut by omega . xi = 0.

    In two dimensions that plane is a line, so the zero set is the origin and its antipode.
    """
    r = params.c * params.tau * params.lam
    return np.array([[0.0, 0.0], -2 * r * params.omega_perp])


@dataclass(frozen=True, eq=False)
class FaddeevKernel:
    """Multiplier m with eps_hat = m * F_hat for Op(eps) = F, plus the zero-mode vector."""

    params: ProbeParams
    z: np.ndarray
    lam: float
    grid: PaddedGrid
    symbol: str
    multiplier: np.ndarray
    const_action: np.ndarray  # Op(a . x) = const_action . a
    sigma: float
    truncation_radius: float
    zeta: np.ndarray | None = None

    @property
    def c(self) -> float:
        return self.params.c

    def Q(self, xi1, xi2):
        return symbol_Q(self.z, xi1, xi2)

    def physical(self) -> np.ndarray:
        """Kernel samples g_z on the periodic grid (origin at index 0)."""
        return np.fft.ifft2(self.multiplier) / self.grid.h ** 2

    def astype(self, dtype) -> "FaddeevKernel":
        if dtype is LD:
            return _build_kernel(self.params, self.grid, self.symbol, self.sigma, LD, check=False)
        return self


def _build_kernel(params, pgrid, symbol, sigma, dtype, check=True) -> FaddeevKernel:
    if params.c ** 2 * params.tau <= 1:
        raise ConfigError("Faddeev kernel needs c^2 tau > 1 strictly")
    cdt = CLD if dtype is LD else complex
    lam = params.lam
    z = params.z
    radius = params.c * params.tau * lam
    dxi = 2 * np.pi / (pgrid.n * pgrid.h)
    nyq = np.pi / pgrid.h
    if check:
        if 2 * radius / dxi < 8:
            need = 8 * 2 * np.pi / (2 * radius)
            raise ConfigError(f"frequency grid too coarse for the zero circle (radius {radius:.3g}): "
                              f"{2 * radius / dxi:.1f} samples across, need 8; pad the grid to width >= {need:.3g}")
        if 2 * radius >= nyq:
            raise ConfigError(f"zero circle (diameter {2 * radius:.3g}) exceeds the Nyquist radius {nyq:.3g}; refine h")
    K1, K2 = pgrid.frequencies(dtype)
    zeta = None
    if symbol == "spectral":
        zc = z.astype(cdt)
        Q = K1 ** 2 + K2 ** 2 - 2j * (zc[0] * K1 + zc[1] * K2)
        if sigma > 0:
            mult = -np.conj(Q) / (np.abs(Q) ** 2 + sigma ** 2)
        else:
            Q[0, 0] = 1
            mult = -1 / Q
        mult[0, 0] = 0
        d = (2 * zc).astype(cdt)
    elif symbol == "lattice":
        hl = LD(1) / LD(round(1 / pgrid.h)) if dtype is LD else pgrid.h
        zeta = _lattice_zeta_complex(params.omega, params.c, params.tau, pgrid.h)
        if params.perp_sign == -1:
            zeta = np.real(zeta) - 1j * np.imag(zeta)
        zl = zeta.astype(cdt)
        p = (2 * np.cosh(zl[0] * hl + 1j * K1 * hl) + 2 * np.cosh(zl[1] * hl + 1j * K2 * hl)
             - 4 - dtype(params.tau) * hl * hl)
        p[0, 0] = 1
        mult = hl * hl / p
        mult[0, 0] = 0
        d = (2 / hl) * np.sinh(zl * hl)
        zeta = zeta.astype(complex)
    else:
        raise ConfigError(f"unknown symbol {symbol!r}")
    return FaddeevKernel(params, z, lam, pgrid, symbol, mult, d, sigma, nyq, zeta)


def faddeev_kernel(params: ProbeParams, pgrid: PaddedGrid, symbol: str = "spectral", sigma: float = 0.0,
                   check: bool = True) -> FaddeevKernel:
    return _build_kernel(params, pgrid, symbol, sigma, float, check)


def _fft2(a):
    return sfft.fft2(a)


def _ifft2(a):
    return sfft.ifft2(a)


def _affine(kernel: FaddeevKernel, mean, dtype=float):
    d = kernel.const_action
    coef = mean * np.conj(d) / np.sum(np.abs(d) ** 2)
    X, Y = kernel.grid.mesh(dtype)
    c = kernel.grid.center.astype(dtype)
    return coef, coef[0] * (X - c[0]) + coef[1] * (Y - c[1])


def gz_convolve(kernel: FaddeevKernel, rhs: np.ndarray, check_support: bool = True,
                return_affine: bool = False):
    """Psi with Op(Psi) = rhs, i.e. -Lap Psi - 2 z.grad Psi + rhs = 0 (spectral symbol)."""
    rhs = np.asarray(rhs)
    if rhs.shape != (kernel.grid.n, kernel.grid.n):
        raise ConfigError("rhs does not match the kernel grid")
    if check_support:
        outside = ~kernel.grid.region_mask()
        if np.any(rhs[outside] != 0):
            raise ConfigError("rhs support exceeds the unpadded box (wrap-around contamination)")
    dtype = LD if rhs.dtype in (np.dtype(LD), np.dtype(CLD)) else float
    R = _fft2(rhs)
    mean = R[0, 0] / kernel.grid.n ** 2
    coef, lin = _affine(kernel, mean, dtype)
    psi = _ifft2(kernel.multiplier * R) + lin
    return (psi, coef) if return_affine else psi


def apply_operator(kernel: FaddeevKernel, psi: np.ndarray, coef=None) -> np.ndarray:
    """Op(psi) for psi = periodic part + coef . (x - centre)."""
    per = psi
    extra = 0
    if coef is not None:
        dtype = LD if psi.dtype == np.dtype(CLD) else float
        X, Y = kernel.grid.mesh(dtype)
        c = kernel.grid.center.astype(dtype)
        per = psi - (coef[0] * (X - c[0]) + coef[1] * (Y - c[1]))
        extra = np.sum(kernel.const_action * coef)
    if kernel.symbol == "spectral":
        K1, K2 = kernel.grid.frequencies()
        out = _ifft2(-kernel.Q(K1, K2) * _fft2(per))
    else:
        z = kernel.zeta.astype(CLD) if psi.dtype == np.dtype(CLD) else kernel.zeta
        hl = LD(1) / LD(round(1 / kernel.grid.h)) if psi.dtype == np.dtype(CLD) else kernel.grid.h
        e = np.exp(z * hl)
        out = (e[0] * np.roll(per, -1, 0) + np.roll(per, 1, 0) / e[0] + e[1] * np.roll(per, -1, 1)
               + np.roll(per, 1, 1) / e[1] - (4 + kernel.params.tau * hl * hl) * per) / (hl * hl)
    return out + extra


def spectral_gradient(kernel: FaddeevKernel, psi: np.ndarray, coef) -> tuple[np.ndarray, np.ndarray]:
    X, Y = kernel.grid.mesh()
    c = kernel.grid.center
    per = psi - (coef[0] * (X - c[0]) + coef[1] * (Y - c[1]))
    K1, K2 = kernel.grid.frequencies()
    P = _fft2(per)
    return _ifft2(1j * K1 * P) + coef[0], _ifft2(1j * K2 * P) + coef[1]


def weighted_norm(pgrid: PaddedGrid, f: np.ndarray, w: np.ndarray | None = None) -> float:
    w = pgrid.weight() if w is None else w
    return float(np.sqrt(np.sum(np.abs(w * f.astype(complex)) ** 2)) * pgrid.h)


@dataclass
class CgoCorrection:
    eps: np.ndarray
    grad: tuple[np.ndarray, np.ndarray]
    affine: np.ndarray
    iterations: int
    increments: list
    op_norm: float
    residual: float
    eps_sup: float
    grad_sup: float
    fixed_point_error: float
    converged: bool = True
    diagnostics: dict = field(default_factory=dict)

    @property
    def increment_ratios(self) -> list:
        inc = self.increments
        return [inc[k + 1] / inc[k] for k in range(len(inc) - 1) if inc[k] > 0]

    def as_dict(self) -> dict:
        return {"iterations": self.iterations, "increments": list(self.increments), "op_norm": self.op_norm,
                "residual": self.residual, "eps_sup": self.eps_sup, "grad_sup": self.grad_sup,
                "fixed_point_error": self.fixed_point_error, "converged": self.converged, **self.diagnostics}


def estimate_contraction(potentials: PotentialPair, kernel: FaddeevKernel, q: np.ndarray,
                         iterations: int = 30, seed: int = 0) -> float:
    """Power iteration for the growth factor of eps -> G[q eps] in the weighted L^2 norm."""
    pgrid = kernel.grid
    w = pgrid.weight()
    rng = np.random.default_rng(seed)
    x = (rng.standard_normal(q.shape) + 1j * rng.standard_normal(q.shape)) * (q != 0)
    if not np.any(x):
        return 0.0
    x /= weighted_norm(pgrid, x, w)
    est = 0.0
    for _ in range(iterations):
        y = gz_convolve(kernel, q * x, check_support=False)
        nrm = weighted_norm(pgrid, y, w)
        if nrm == 0:
            return 0.0
        est, x = nrm, y / nrm
    return est


def neumann_solve(potentials: PotentialPair, kernel: FaddeevKernel, eta: float = 0.9, max_iter: int = 200,
                  tol: float = 1e-13, gate: bool = True, extended: bool = False) -> CgoCorrection:
    """Fixed point eps = G[(tau a + b)(1 + eps)] from eps = 0."""
    pgrid = kernel.grid
    tau = kernel.params.tau
    q = tau * potentials.a + potentials.b
    region = pgrid.region_mask()
    w = pgrid.weight()
    if not np.any(q):
        z = np.zeros(q.shape, complex)
        return CgoCorrection(z, (z, z.copy()), np.zeros(2, complex), 1, [0.0], 0.0, 0.0, 0.0, 0.0, 0.0)
    op = estimate_contraction(potentials, kernel, q)
    if gate and op >= 1:
        raise NonContractionError(f"measured contraction factor {op:.3g} >= 1; increase c")
    eps = np.zeros(q.shape, complex)
    incs = []
    grow = 0
    coef = np.zeros(2, complex)
    for it in range(1, max_iter + 1):
        new, coef = gz_convolve(kernel, q * (1 + eps), check_support=False, return_affine=True)
        inc = weighted_norm(pgrid, new - eps, w)
        eps = new
        incs.append(inc)
        if len(incs) > 1 and incs[-2] > 0 and inc >= incs[-2]:
            grow += 1
            if grow >= 3:
                raise NonContractionError("Neumann series increments stopped shrinking; increase c")
        else:
            grow = 0
        if inc <= tol * max(1.0, weighted_norm(pgrid, eps, w)):
            break
    else:
        raise SolverError(f"Neumann series did not converge in {max_iter} iterations "
                          f"(last increment {incs[-1]:.3g})")
    fp = weighted_norm(pgrid, gz_convolve(kernel, q * (1 + eps), check_support=False) - eps, w)
    if kernel.symbol == "spectral":
        gx, gy = spectral_gradient(kernel, eps, coef)
    else:
        hl = pgrid.h
        gx = (np.roll(eps, -1, 0) - np.roll(eps, 1, 0)) / (2 * hl)
        gy = (np.roll(eps, -1, 1) - np.roll(eps, 1, 1)) / (2 * hl)
        X, Y = pgrid.mesh()
        edge = np.zeros(eps.shape, bool)
        edge[[0, -1], :] = edge[:, [0, -1]] = True
        gx[edge], gy[edge] = coef[0], coef[1]
    res = apply_operator(kernel, eps, coef) - q * (1 + eps)
    qmax = float(np.max(np.abs(q)))
    rel = float(np.max(np.abs(res[region]))) / qmax
    eps_sup = float(np.max(np.abs(eps[region])))
    grad_sup = float(np.max(np.hypot(np.abs(gx[region]), np.abs(gy[region]))))
    out = CgoCorrection(eps, (gx, gy), coef, len(incs), incs, op, rel, eps_sup, grad_sup, fp)
    ratios = out.increment_ratios
    out.diagnostics["max_increment_ratio"] = max(ratios) if ratios else 0.0
    if extended:
        out = _refine_extended(potentials, kernel, out)
    return out


def resonance_margin(kernel: FaddeevKernel) -> float:
    """Smallest |symbol| over the nonzero sampled frequencies (in units of the continuum symbol)."""
    m = np.abs(kernel.multiplier)
    m[0, 0] = 0
    return float(1 / m.max())


def quiet_lattice(params: ProbeParams, grid: Grid, pad: float = 2.0, min_extent: float = 0.0,
                  tries: int = 12) -> PaddedGrid:
    """Among slightly larger periodic lattices, the one whose frequencies stay furthest from the zeros of the symbol.

    A sampled frequency close to the nonzero real zero makes the periodic inverse nearly singular, which
    inflates eps and makes it jump from one tau to the next.
    """
    base = lattice_grid(grid, pad, min_extent)
    best, score, seen = base, -1.0, set()
    for k in range(tries):
        pg = lattice_grid(grid, pad, base.n * grid.h * (1 + 0.02 * k))
        if pg.n in seen:
            continue
        seen.add(pg.n)
        m = resonance_margin(faddeev_kernel(params, pg, "lattice", check=False))
        if m > score:
            best, score = pg, m
    return best


def choose_padding(params: ProbeParams, h: float, min_samples: float = 8.0) -> float:
    """Grid width needed to put min_samples frequency samples across the zero circle."""
    r = params.c * params.tau * params.lam
    return min_samples * 2 * np.pi / (2 * r) if r > 0 else math.inf


def build_cgo_probe(background: Background, params: ProbeParams, eta: float, grid: Grid,
                    pad: float = 2.0, max_iter: int = 200, tol: float = 1e-13, extended: bool = True,
                    resolve_circle: bool = False) -> ProbeSolution:
    """v = e^{x.zeta}(1 + eps)/sqrt(gamma0) on the forward grid's lattice; exact discrete solution."""
    if params.kind not in ("cgo", "complex"):
        raise ConfigError("build_cgo_probe needs kind='cgo'")
    if background.is_constant:
        p = ProbeParams(params.omega, params.c, params.tau, "complex", params.perp_sign)
        base = make_complex_probe(p, grid)
        return ProbeSolution(params, base.z, base.zeta, base.tau_lattice, base.log_scale, base.trace,
                             base.conormal, base.gamma0_node, base.h, True, base.cell_sampler, base.sampler,
                             {"eps_sup": 0.0, "grad_sup": 0.0, "iterations": 0, "op_norm": 0.0, "residual": 0.0})
    min_extent = choose_padding(params, grid.h) if resolve_circle else 0.0
    pgrid = quiet_lattice(params, grid, pad, min_extent)
    pots = liouville_potentials(background, pgrid, discrete=True, dtype=LD if extended else float)
    pots_d = PotentialPair(pots.a.astype(float), pots.b.astype(float), pots.box, pgrid, True)
    kernel = faddeev_kernel(params, pgrid, "lattice", check=False)
    corr = neumann_solve(pots_d, kernel, eta, max_iter, tol, extended=False)
    if corr.eps_sup + corr.grad_sup > eta:
        raise NonContractionError(f"|eps| + |grad eps| = {corr.eps_sup + corr.grad_sup:.3g} > eta = {eta}; "
                                  f"increase c")
    if extended:
        corr = _refine_extended(pots, kernel, corr)
    eps = corr.eps.astype(CLD)
    # lattice values at forward cells and ghost cells
    hl = LD(1) / LD(grid.domain.resolution)
    x0 = LD(pgrid.origin[0])
    y0 = LD(pgrid.origin[1])
    cpos = grid.cell_centers(LD)
    zl = kernel.zeta.astype(CLD)
    re = np.real(zl).astype(LD)
    xg = grid.ghost_pos(LD)
    xc = grid.node_cell_pos(LD)

    def index(p):
        i = np.rint((p[:, 0] - x0) / hl).astype(int)
        j = np.rint((p[:, 1] - y0) / hl).astype(int)
        return i, j

    kappa = max(np.max(cpos @ re), np.max(xg @ re))
    s_of = lambda p: np.sqrt(background.gamma0(p[:, 0], p[:, 1]).astype(LD))

    def values(p):
        i, j = index(p)
        return np.exp(p @ zl - kappa) * (1 + eps[i, j]) / s_of(p)

    vc, vg = values(xc), values(xg)
    g0c = background.gamma0(xc[:, 0], xc[:, 1]).astype(LD)
    g0g = background.gamma0(xg[:, 0], xg[:, 1]).astype(LD)
    g = np.sqrt(g0c * g0g) * (vg - vc) / hl
    trace = vc + hl / 2 * g / g0c

    def cell_sampler():
        return values(grid.cell_centers(LD)).astype(complex)

    diag = {"eps_sup": corr.eps_sup, "grad_sup": corr.grad_sup, "iterations": corr.iterations,
            "op_norm": corr.op_norm, "residual": corr.residual, "lattice_n": pgrid.n,
            "increments": corr.increments}
    return ProbeSolution(params, params.z, kernel.zeta, params.tau, float(kappa), trace.astype(complex),
                         g.astype(complex), g0c.astype(float), grid.h, True, cell_sampler, None, diag)


def _refine_extended(pots: PotentialPair, kernel: FaddeevKernel, corr: CgoCorrection) -> CgoCorrection:
    """Continue the fixed-point iteration in extended precision from a converged double solution."""
    tau = LD(kernel.params.tau)
    q = tau * pots.a.astype(LD) + pots.b.astype(LD)
    kL = kernel.astype(LD)
    eps = corr.eps.astype(CLD)
    for k in range(60):
        new = gz_convolve(kL, q * (1 + eps), check_support=False)
        d = float(np.max(np.abs(new - eps)))
        eps = new
        if d <= 1e-18 * max(1.0, float(np.max(np.abs(eps)))):
            break
    corr.eps = eps
    corr.diagnostics["extended_iterations"] = k + 1
    return corr
