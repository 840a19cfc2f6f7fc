"""Trial data containers and fixed regression design layouts."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ClusterRecord:
    """One cluster: treatment and covariates at the cluster level, plus
    per-individual covariates, confounder, mediator and outcome."""

    id: str
    treatment: int
    cluster_covariates: np.ndarray  # shape (q,)
    X: np.ndarray                   # shape (N, p)
    D: np.ndarray                   # shape (N,)
    M: np.ndarray                   # shape (N,)
    Y: np.ndarray                   # shape (N,)

    @property
    def size(self) -> int:
        return self.X.shape[0]

    def validate(self, p: int, q: int) -> None:
        n = self.size
        if n < 1:
            raise ValueError(f"cluster {self.id!r} is empty")
        if self.treatment not in (0, 1):
            raise ValueError(f"cluster {self.id!r}: treatment must be 0 or 1")
        if self.cluster_covariates.shape != (q,):
            raise ValueError(f"cluster {self.id!r}: expected {q} cluster covariates")
        if self.X.shape != (n, p):
            raise ValueError(f"cluster {self.id!r}: X must have shape ({n}, {p})")
        for name, arr in (("D", self.D), ("M", self.M), ("Y", self.Y)):
            if arr.shape != (n,):
                raise ValueError(f"cluster {self.id!r}: {name} must have length {n}")


@dataclass(frozen=True)
class ClusterDataset:
    """Ordered collection of clusters with constant covariate dimensions.

    ``binary_d`` switches the confounder model to the latent-variable probit
    formulation (D is a 0/1 indicator backed by a continuous latent normal).
    """

    clusters: tuple[ClusterRecord, ...]
    binary_d: bool = False

    def __post_init__(self):
        if not self.clusters:
            return
        p, q = self.p, self.q
        for rec in self.clusters:
            rec.validate(p, q)
        if self.binary_d:
            for rec in self.clusters:
                if not np.isin(rec.D, (0.0, 1.0)).all():
                    raise ValueError(f"cluster {rec.id!r}: binary D must be 0/1")

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    @property
    def n_total(self) -> int:
        return sum(rec.size for rec in self.clusters)

    @property
    def p(self) -> int:
        return self.clusters[0].X.shape[1] if self.clusters else 0

    @property
    def q(self) -> int:
        return self.clusters[0].cluster_covariates.shape[0] if self.clusters else 0


def loo_mean(values: np.ndarray) -> np.ndarray:
    """Leave-one-out cluster mean; singleton clusters fall back to the own
    value (no spillover exists there)."""
    n = values.shape[0]
    if n == 1:
        return values.copy()
    return (values.sum() - values) / (n - 1)


@dataclass(frozen=True)
class DesignSpec:
    """Fixed design-vector layouts for the D, M and Y regressions.

    d-design: [1, A, N, V, X]
    m-design: d-design + [D_own, D_loo]
    y-design: m-design + [M_own, M_loo]

    where *_loo is the leave-one-out within-cluster mean.
    """

    p: int
    q: int

    @property
    def dim_d(self) -> int:
        return 3 + self.q + self.p

    @property
    def dim_m(self) -> int:
        return self.dim_d + 2

    @property
    def dim_y(self) -> int:
        return self.dim_d + 4

    def d_rows(self, a, n, V, X) -> np.ndarray:
        """d-design rows for one cluster; X has shape (n_units, p)."""
        n_units = X.shape[0]
        base = np.empty((n_units, self.dim_d))
        base[:, 0] = 1.0
        base[:, 1] = a
        base[:, 2] = n
        base[:, 3:3 + self.q] = V
        base[:, 3 + self.q:] = X
        return base

    def m_rows(self, a, n, V, X, D) -> np.ndarray:
        return np.column_stack([self.d_rows(a, n, V, X), D, loo_mean(D)])

    def y_rows(self, a, n, V, X, D, M) -> np.ndarray:
        return np.column_stack([self.m_rows(a, n, V, X, D), M, loo_mean(M)])


@dataclass
class FlatData:
    """Dataset flattened to per-individual arrays with precomputed designs.

    Built once per dataset; the Gibbs sweeps never rebuild design matrices.
    """

    sizes: np.ndarray          # (I,)
    treatments: np.ndarray     # (I,)
    V: np.ndarray              # (I, q)
    cluster_index: np.ndarray  # (n_total,) individual -> cluster
    X: np.ndarray              # (n_total, p)
    D: np.ndarray
    M: np.ndarray
    Y: np.ndarray
    C_d: np.ndarray            # (n_total, dim_d)
    C_m: np.ndarray
    C_y: np.ndarray
    slices: list[slice] = field(default_factory=list)

    @property
    def n_clusters(self) -> int:
        return self.sizes.shape[0]

    @property
    def n_total(self) -> int:
        return self.X.shape[0]


def flatten(dataset: ClusterDataset, design: DesignSpec) -> FlatData:
    sizes = np.array([rec.size for rec in dataset.clusters], dtype=np.int64)
    treatments = np.array([rec.treatment for rec in dataset.clusters], dtype=np.int64)
    V = np.array([rec.cluster_covariates for rec in dataset.clusters], dtype=float)
    V = V.reshape(dataset.n_clusters, dataset.q)
    cluster_index = np.repeat(np.arange(dataset.n_clusters), sizes)
    X = np.concatenate([rec.X for rec in dataset.clusters]) if dataset.clusters \
        else np.empty((0, design.p))
    D = np.concatenate([rec.D for rec in dataset.clusters]) if dataset.clusters else np.empty(0)
    M = np.concatenate([rec.M for rec in dataset.clusters]) if dataset.clusters else np.empty(0)
    Y = np.concatenate([rec.Y for rec in dataset.clusters]) if dataset.clusters else np.empty(0)

    cd, cm, cy, slices = [], [], [], []
    offset = 0
    for rec in dataset.clusters:
        a, n = rec.treatment, rec.size
        cd.append(design.d_rows(a, n, rec.cluster_covariates, rec.X))
        cm.append(design.m_rows(a, n, rec.cluster_covariates, rec.X, rec.D))
        cy.append(design.y_rows(a, n, rec.cluster_covariates, rec.X, rec.D, rec.M))
        slices.append(slice(offset, offset + n))
        offset += n
    C_d = np.concatenate(cd) if cd else np.empty((0, design.dim_d))
    C_m = np.concatenate(cm) if cm else np.empty((0, design.dim_m))
    C_y = np.concatenate(cy) if cy else np.empty((0, design.dim_y))
    return FlatData(sizes, treatments, V, cluster_index, X, D, M, Y,
                    C_d, C_m, C_y, slices)
