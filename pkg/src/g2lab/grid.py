"""Periodic grids on the flat 7-torus: k-form fields and discrete exterior calculus.

Layout contract (also the snapshot byte layout): a field stores one row of
C(7,k) components per site, component index innermost; the site index is
site = x1 + n*x2 + ... + n^6*x7, so axis 1 varies fastest.  Reshaping the
flat data to (n,)*7 + (ncomp,) therefore puts torus axis a (1-based) at
array axis -(a+1) counting the component axis as -1.

Exterior derivatives use centered differences (order 2 or 4) with periodic
wraparound via np.roll.  Distinct-axis stencils commute and equal-axis
terms cancel in the alternation, so the discrete d satisfies d(d(f)) = 0
to roundoff, and periodic sums make d and the codifferential exactly
adjoint at constant metric.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as kn
from ._tables import DIM, NCOMP, dx_wedge_table
from .errors import FormDegreeError, GridError, NotPositiveError
from .forms import KForm
from .g2 import _metric_arrays, standard_phi

__all__ = [
    "TorusGrid",
    "FormField",
    "MetricField",
    "ext_d",
    "codiff",
    "hodge_field",
    "hodge_laplacian",
    "dual_field",
    "l2_inner",
    "l2_norm",
    "sup_norm",
    "make_initial_data",
    "save_snapshot",
    "load_snapshot",
]

_SNAPSHOT_MAGIC = "g2field"
_SNAPSHOT_VERSION = 1
_HEADER_END = b"end_header\n"
_CHUNK = 32768  # sites per block for pointwise algebra on large grids
_PERTURBATION_MODES = 6


@dataclass(frozen=True)
class TorusGrid:
    """Uniform n^7 grid on a flat torus with the given axis lengths."""

    n: int
    lengths: tuple = (1.0,) * DIM
    fd_order: int = 2

    def __post_init__(self):
        if not float(self.n).is_integer() or int(self.n) < 4:
            raise GridError(f"grid needs n >= 4 sites per axis, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        lengths = tuple(float(x) for x in self.lengths)
        if len(lengths) != DIM:
            raise GridError(f"expected {DIM} axis lengths, got {len(lengths)}")
        if any(not math.isfinite(x) or x <= 0 for x in lengths):
            raise GridError(f"axis lengths must be positive, got {lengths}")
        object.__setattr__(self, "lengths", lengths)
        if self.fd_order not in (2, 4):
            raise GridError(f"fd_order must be 2 or 4, got {self.fd_order}")
        if self.fd_order == 4 and self.n < 6:
            raise GridError("order-4 stencil needs n >= 6")

    @property
    def shape(self) -> tuple:
        return (self.n,) * DIM

    @property
    def nsites(self) -> int:
        return self.n**DIM

    @property
    def spacings(self) -> tuple:
        return tuple(x / self.n for x in self.lengths)

    @property
    def cell_volume(self) -> float:
        return math.prod(self.spacings)

    def site_coords(self, site: int) -> tuple:
        """(x1, ..., x7) lattice coordinates of a flat site index."""
        if not 0 <= site < self.nsites:
            raise GridError(f"site {site} out of range")
        out = []
        for _ in range(DIM):
            out.append(site % self.n)
            site //= self.n
        return tuple(out)


def _blocks(total: int):
    for start in range(0, total, _CHUNK):
        yield slice(start, min(start + _CHUNK, total))


@dataclass(frozen=True)
class FormField:
    """A degree-k form sampled at every grid site; data shape (nsites, C(7,k))."""

    grid: TorusGrid
    degree: int
    data: np.ndarray

    def __post_init__(self):
        if not 0 <= self.degree <= DIM:
            raise FormDegreeError(f"degree must be 0..{DIM}, got {self.degree}")
        data = np.ascontiguousarray(self.data, dtype=float)
        want = (self.grid.nsites, NCOMP[self.degree])
        if data.shape != want:
            raise GridError(f"field data shape {data.shape}, expected {want}")
        if not np.all(np.isfinite(data)):
            raise GridError("field data contains non-finite entries")
        object.__setattr__(self, "data", data)

    @classmethod
    def constant(cls, grid: TorusGrid, value: KForm) -> "FormField":
        data = np.tile(value.comps, (grid.nsites, 1))
        return cls(grid, value.degree, data)

    @classmethod
    def zeros(cls, grid: TorusGrid, degree: int) -> "FormField":
        return cls(grid, degree, np.zeros((grid.nsites, NCOMP[degree])))

    @property
    def shaped(self) -> np.ndarray:
        """View of the data laid out on the grid, component axis last."""
        return self.data.reshape(self.grid.shape + (self.data.shape[-1],))

    def site_value(self, site: int) -> KForm:
        return KForm(self.degree, self.data[site])

    def __add__(self, other: "FormField") -> "FormField":
        _check_same(self, other)
        return FormField(self.grid, self.degree, self.data + other.data)

    def __sub__(self, other: "FormField") -> "FormField":
        _check_same(self, other)
        return FormField(self.grid, self.degree, self.data - other.data)

    def __rmul__(self, c: float) -> "FormField":
        return FormField(self.grid, self.degree, float(c) * self.data)

    def __neg__(self) -> "FormField":
        return FormField(self.grid, self.degree, -self.data)


def _check_same(f: FormField, g: FormField):
    if f.grid != g.grid:
        raise GridError("fields live on different grids")
    if f.degree != g.degree:
        raise FormDegreeError(f"degree mismatch: {f.degree} vs {g.degree}")


@dataclass(frozen=True)
class MetricField:
    """Per-site metric data induced by a positive 3-form field.

    margin is the smallest eigenvalue of the positivity matrix B over all
    sites; worst_site is where it is attained.
    """

    grid: TorusGrid
    g: np.ndarray  # (nsites, 7, 7)
    g_inv: np.ndarray  # (nsites, 7, 7)
    sqrt_det: np.ndarray  # (nsites,)
    margin: float
    worst_site: int

    @classmethod
    def from_phi(cls, phi: FormField) -> "MetricField":
        if phi.degree != 3:
            raise FormDegreeError("MetricField.from_phi expects a 3-form field")
        nsites = phi.grid.nsites
        g = np.empty((nsites, DIM, DIM))
        g_inv = np.empty((nsites, DIM, DIM))
        sqrt_det = np.empty(nsites)
        margin = np.inf
        worst = 0
        bad = None
        for sl in _blocks(nsites):
            gb, gib, sdb, mb, okb = _metric_arrays(phi.data[sl])
            g[sl], g_inv[sl], sqrt_det[sl] = gb, gib, sdb
            local = int(np.argmin(mb))
            if mb[local] < margin:
                margin = float(mb[local])
                worst = sl.start + local
            if bad is None and not np.all(okb):
                bad = sl.start + int(np.argmin(okb))
        if bad is not None:
            raise NotPositiveError(
                f"3-form field not positive at site {worst} "
                f"{phi.grid.site_coords(worst)} (margin {margin:g})",
                margin=margin,
                site=worst,
            )
        return cls(
            grid=phi.grid, g=g, g_inv=g_inv, sqrt_det=sqrt_det,
            margin=margin, worst_site=worst,
        )

    @property
    def min_metric_eig(self) -> float:
        out = np.inf
        for sl in _blocks(self.grid.nsites):
            out = min(out, float(np.linalg.eigvalsh(self.g[sl])[..., 0].min()))
        return out

    @property
    def total_volume(self) -> float:
        return float(self.sqrt_det.sum()) * self.grid.cell_volume


# ---------------------------------------------------------------------------
# stencils and exterior calculus
# ---------------------------------------------------------------------------


def _partial(shaped: np.ndarray, axis: int, grid: TorusGrid, trailing: int = 1):
    """Centered difference along torus axis `axis` (0-based); periodic.

    Works for any leading batch axes; `trailing` counts non-spatial axes
    on the right (1 for component fields, 2 for matrix fields).
    """
    ax = -(axis + 1 + trailing)
    h = grid.spacings[axis]
    f_p = np.roll(shaped, -1, axis=ax)
    f_m = np.roll(shaped, 1, axis=ax)
    if grid.fd_order == 2:
        return (f_p - f_m) / (2.0 * h)
    f_p2 = np.roll(shaped, -2, axis=ax)
    f_m2 = np.roll(shaped, 2, axis=ax)
    return (8.0 * (f_p - f_m) - (f_p2 - f_m2)) / (12.0 * h)


class _RollOps:
    """Stencil backend for shaped grid arrays (see the layout contract)."""

    __slots__ = ("grid",)

    def __init__(self, grid: TorusGrid):
        self.grid = grid

    def partial(self, arr: np.ndarray, axis: int, trailing: int = 1):
        return _partial(arr, axis, self.grid, trailing)


def _d_ops(ops, arr: np.ndarray, degree: int) -> np.ndarray:
    """Exterior derivative through a stencil backend, components last.

    The backend only has to supply centered differences along each torus
    axis; the wedge with dx^a is a per-axis scatter-add.
    """
    if degree >= DIM:
        raise FormDegreeError("ext_d undefined on top-degree forms")
    tables = dx_wedge_table(degree)
    out = np.zeros(arr.shape[:-1] + (NCOMP[degree + 1],))
    for a in range(DIM):
        df = ops.partial(arr, a)
        dest, src, sg = tables[a]
        out[..., dest] += df[..., src] * sg
    return out


def _ext_d_raw(shaped: np.ndarray, degree: int, grid: TorusGrid) -> np.ndarray:
    return _d_ops(_RollOps(grid), shaped, degree)


def ext_d(f: FormField) -> FormField:
    """Discrete exterior derivative; d(d(f)) = 0 to roundoff."""
    out = _ext_d_raw(f.shaped, f.degree, f.grid)
    return FormField(f.grid, f.degree + 1, out.reshape(f.grid.nsites, -1))


def _star_flat(data: np.ndarray, degree: int, m: MetricField) -> np.ndarray:
    out = np.empty((data.shape[0], NCOMP[DIM - degree]))
    for sl in _blocks(data.shape[0]):
        out[sl] = kn.star_comps(
            degree, data[sl], m.g[sl], m.g_inv[sl], m.sqrt_det[sl]
        )
    return out


def hodge_field(f: FormField, m: MetricField) -> FormField:
    """Per-site Hodge star of a field."""
    if f.grid != m.grid:
        raise GridError("field and metric live on different grids")
    return FormField(f.grid, DIM - f.degree, _star_flat(f.data, f.degree, m))


def dual_field(phi: FormField, m: MetricField) -> FormField:
    """The 4-form field psi = *phi of a positive 3-form field."""
    if phi.degree != 3:
        raise FormDegreeError("dual_field expects a 3-form field")
    return hodge_field(phi, m)


def codiff(f: FormField, m: MetricField) -> FormField:
    """Codifferential d* f = (-1)^k * d * f (k >= 1)."""
    if f.degree < 1:
        raise FormDegreeError("codiff undefined on 0-forms")
    if f.grid != m.grid:
        raise GridError("field and metric live on different grids")
    star1 = hodge_field(f, m)
    dstar = ext_d(star1)
    out = _star_flat(dstar.data, dstar.degree, m)
    if f.degree % 2:
        out = -out
    return FormField(f.grid, f.degree - 1, out)


def hodge_laplacian(f: FormField, m: MetricField) -> FormField:
    """Hodge Laplacian d d* + d* d (nonnegative spectrum convention)."""
    parts = []
    if f.degree >= 1:
        parts.append(ext_d(codiff(f, m)))
    if f.degree <= DIM - 1:
        parts.append(codiff(ext_d(f), m))
    return parts[0] if len(parts) == 1 else parts[0] + parts[1]


def l2_inner(f: FormField, g: FormField, m: MetricField) -> float:
    """sum_sites <f,g>_g(site) vol_g(site) * prod h_a; exactly symmetric."""
    _check_same(f, g)
    if f.grid != m.grid:
        raise GridError("fields and metric live on different grids")
    total = 0.0
    for sl in _blocks(f.grid.nsites):
        a = kn.inner_comps(f.degree, f.data[sl], g.data[sl], m.g[sl], m.g_inv[sl], m.sqrt_det[sl])
        b = kn.inner_comps(f.degree, g.data[sl], f.data[sl], m.g[sl], m.g_inv[sl], m.sqrt_det[sl])
        total += float((0.5 * (a + b) * m.sqrt_det[sl]).sum())
    return total * f.grid.cell_volume


def l2_norm(f: FormField, m: MetricField) -> float:
    return math.sqrt(max(l2_inner(f, f, m), 0.0))


def sup_norm(f: FormField) -> float:
    """Largest absolute component over all sites (metric-free)."""
    return float(np.abs(f.data).max()) if f.data.size else 0.0


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------


def _random_two_form(grid: TorusGrid, seed: int, band: int) -> FormField:
    """Band-limited pseudo-random 2-form field, deterministic in the seed."""
    if band < 1:
        raise GridError(f"band must be >= 1, got {band}")
    rng = np.random.default_rng(seed)
    modes = []
    while len(modes) < _PERTURBATION_MODES:
        m = rng.integers(-band, band + 1, size=DIM)
        if np.any(m):
            modes.append(m)
    amps = rng.normal(size=(_PERTURBATION_MODES, NCOMP[2]))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(_PERTURBATION_MODES, NCOMP[2]))
    coords = np.indices(grid.shape).reshape(DIM, grid.nsites)
    data = np.zeros((grid.nsites, NCOMP[2]))
    for m, amp, phase in zip(modes, amps, phases):
        # torus axis a lives at coords row 6 - a
        angle = (2.0 * np.pi / grid.n) * sum(
            int(m[a]) * coords[DIM - 1 - a] for a in range(DIM)
        )
        data += amp * np.cos(angle[:, None] + phase)
    return FormField(grid, 2, data)


def make_initial_data(
    grid: TorusGrid,
    kind: str = "standard",
    eps: float = 0.01,
    seed: int = 0,
    band: int = 1,
    path=None,
) -> FormField:
    """Initial 3-form field: the constant standard form, an exactly closed
    perturbation of it, or a loaded snapshot.  Verifies positivity sitewise.
    """
    if kind == "standard":
        field = FormField.constant(grid, standard_phi())
    elif kind == "closed_perturbation":
        field = FormField.constant(grid, standard_phi())
        if eps != 0.0:
            beta = _random_two_form(grid, seed, band)
            dbeta = ext_d(beta)
            scale = sup_norm(dbeta)
            if scale == 0.0:
                raise GridError("degenerate perturbation draw: d(beta) vanished")
            field = field + (eps / scale) * dbeta
    elif kind == "file":
        if path is None:
            raise GridError("initial data kind 'file' needs a path")
        field = load_snapshot(path)
        if field.degree != 3:
            raise GridError(f"snapshot holds a {field.degree}-form, expected 3")
        if field.grid != grid:
            raise GridError("snapshot grid does not match the requested grid")
    else:
        raise GridError(f"unknown initial data kind {kind!r}")
    MetricField.from_phi(field)  # positivity gate; raises with worst site
    return field


# ---------------------------------------------------------------------------
# snapshots
# ---------------------------------------------------------------------------


def save_snapshot(field: FormField, path) -> None:
    """Text header plus raw little-endian float64 data in the layout above."""
    grid = field.grid
    lengths = " ".join("%.17g" % x for x in grid.lengths)
    header = (
        f"{_SNAPSHOT_MAGIC} {_SNAPSHOT_VERSION}\n"
        f"n {grid.n}\n"
        f"lengths {lengths}\n"
        f"degree {field.degree}\n"
        f"fd_order {grid.fd_order}\n"
        f"byte_order little-endian\n"
        f"end_header\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(field.data, dtype="<f8").tobytes())


def load_snapshot(path) -> FormField:
    with open(path, "rb") as fh:
        raw = fh.read()
    cut = raw.find(_HEADER_END)
    if cut < 0:
        raise GridError(f"{path}: missing snapshot header terminator")
    try:
        lines = raw[:cut].decode("ascii").splitlines()
    except UnicodeDecodeError as exc:
        raise GridError(f"{path}: snapshot header is not ASCII") from exc
    fields = {}
    for line in lines[1:]:
        key, _, value = line.partition(" ")
        fields[key] = value
    magic = lines[0].split() if lines else []
    if magic[:1] != [_SNAPSHOT_MAGIC] or magic[1:] != [str(_SNAPSHOT_VERSION)]:
        raise GridError(f"{path}: not a version-{_SNAPSHOT_VERSION} snapshot")
    try:
        grid = TorusGrid(
            n=int(fields["n"]),
            lengths=tuple(float(x) for x in fields["lengths"].split()),
            fd_order=int(fields["fd_order"]),
        )
        degree = int(fields["degree"])
        byte_order = fields["byte_order"]
    except (KeyError, ValueError) as exc:
        raise GridError(f"{path}: malformed snapshot header ({exc})") from exc
    if byte_order != "little-endian":
        raise GridError(f"{path}: unsupported byte order {byte_order!r}")
    if not 0 <= degree <= DIM:
        raise GridError(f"{path}: bad form degree {degree}")
    payload = raw[cut + len(_HEADER_END):]
    want = grid.nsites * NCOMP[degree] * 8
    if len(payload) != want:
        raise GridError(f"{path}: payload is {len(payload)} bytes, expected {want}")
    data = np.frombuffer(payload, dtype="<f8").astype(float)
    return FormField(grid, degree, data.reshape(grid.nsites, NCOMP[degree]))
