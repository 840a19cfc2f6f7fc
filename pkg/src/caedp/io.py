"""Data ingestion and artifact persistence.

Data and draws travel as CSV; run configuration is a flat key=value text
file. All files are UTF-8 with '.' as the decimal separator regardless of
locale, and every artifact write is atomic (temp file then rename).
"""

from __future__ import annotations

import csv
import hashlib
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .data import ClusterDataset, ClusterRecord
from .gcomp import ESTIMAND_NAMES, EstimandDraws
from .gibbs import PosteriorSample


@dataclass(frozen=True)
class ColumnSchema:
    """Roles of the data CSV columns."""

    cluster_id: str = "cluster_id"
    treatment: str = "A"
    v_cols: tuple[str, ...] = ("V_1",)
    x_cols: tuple[str, ...] = ("X_1", "X_2", "X_3")
    d_col: str = "D"
    m_col: str = "M"
    y_col: str = "Y"
    binary_d: bool = False

    def required(self) -> list[str]:
        return [self.cluster_id, self.treatment, *self.v_cols, *self.x_cols,
                self.d_col, self.m_col, self.y_col]


class IngestError(ValueError):
    pass


def _parse_cell(raw: str, row: int, col: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise IngestError(f"row {row}, column {col!r}: non-numeric "
                          f"value {raw!r}") from None


def ingest_csv(path: str, schema: ColumnSchema) -> ClusterDataset:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in schema.required():
            if col not in header:
                raise IngestError(f"missing column {col!r}")
        rows = list(reader)
    if not rows:
        raise IngestError("data file has no rows")

    # group rows by cluster, preserving first-appearance order
    order: list[str] = []
    by_cluster: dict[str, list[tuple[int, dict]]] = {}
    for idx, row in enumerate(rows, start=2):  # 1-based with header line
        cid = row[schema.cluster_id]
        if cid == "":
            raise IngestError(f"row {idx}, column {schema.cluster_id!r}: "
                              "empty cluster id")
        if cid not in by_cluster:
            by_cluster[cid] = []
            order.append(cid)
        by_cluster[cid].append((idx, row))

    clusters = []
    for cid in order:
        members = by_cluster[cid]
        a_vals = {
            _parse_cell(r[schema.treatment], i, schema.treatment)
            for i, r in members}
        if len(a_vals) != 1:
            bad = members[1][0]
            raise IngestError(f"row {bad}, column {schema.treatment!r}: "
                              f"treatment differs within cluster {cid!r}")
        a = int(a_vals.pop())
        if a not in (0, 1):
            raise IngestError(f"cluster {cid!r}: treatment must be 0 or 1")
        v_rows = np.array([[_parse_cell(r[c], i, c) for c in schema.v_cols]
                           for i, r in members])
        if not (v_rows == v_rows[0]).all():
            bad_j = int(np.argwhere(v_rows != v_rows[0])[0][0])
            raise IngestError(f"row {members[bad_j][0]}: cluster covariate "
                              f"differs within cluster {cid!r}")
        X = np.array([[_parse_cell(r[c], i, c) for c in schema.x_cols]
                      for i, r in members])
        D = np.array([_parse_cell(r[schema.d_col], i, schema.d_col)
                      for i, r in members])
        M = np.array([_parse_cell(r[schema.m_col], i, schema.m_col)
                      for i, r in members])
        Y = np.array([_parse_cell(r[schema.y_col], i, schema.y_col)
                      for i, r in members])
        clusters.append(ClusterRecord(id=cid, treatment=a,
                                      cluster_covariates=v_rows[0],
                                      X=X, D=D, M=M, Y=Y))
    return ClusterDataset(tuple(clusters), binary_d=schema.binary_d)


def write_dataset_csv(path: str, dataset: ClusterDataset,
                      schema: ColumnSchema) -> None:
    lines = [",".join(schema.required())]
    for rec in dataset.clusters:
        for j in range(rec.size):
            vals = [rec.id, repr(int(rec.treatment)),
                    *(repr(float(v)) for v in rec.cluster_covariates),
                    *(repr(float(x)) for x in rec.X[j]),
                    repr(float(rec.D[j])), repr(float(rec.M[j])),
                    repr(float(rec.Y[j]))]
            lines.append(",".join(vals))
    atomic_write(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# atomic writes and the flat key=value config format
# ---------------------------------------------------------------------------

def atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_config(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, _, value = stripped.partition("=")
            out[key.strip()] = value.strip()
    return out


def format_config(config: dict) -> str:
    return "\n".join(f"{k}={config[k]}" for k in sorted(config)) + "\n"


def content_hash(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# artifact writers
# ---------------------------------------------------------------------------

def write_posterior_csv(path: str, samples: list[PosteriorSample]) -> None:
    """One row per kept iteration x parameter coordinate (long format)."""
    lines = ["iteration,block,k,l,m,coord,value"]

    def emit(it, block, k, l, m, coord, value):
        lines.append(f"{it},{block},{k},{l},{m},{coord},{value!r}")

    for it, s in enumerate(samples):
        for name in ("alpha_star", "alpha_theta", "alpha_phi"):
            emit(it, name, "", "", "", 0, float(getattr(s, name)))
        for k, v in enumerate(s.pi):
            emit(it, "pi", k, "", "", 0, float(v))
        for k in range(s.w_theta.shape[0]):
            for l in range(s.w_theta.shape[1]):
                emit(it, "w_theta", k, l, "", 0, float(s.w_theta[k, l]))
                for m in range(s.w_phi.shape[2]):
                    emit(it, "w_phi", k, l, m, 0, float(s.w_phi[k, l, m]))
        for k, v in enumerate(s.lam):
            emit(it, "lam", k, "", "", 0, float(v))
        for k in range(s.eta_mean.shape[0]):
            for c in range(s.eta_mean.shape[1]):
                emit(it, "eta_mean", k, "", "", c, float(s.eta_mean[k, c]))
                emit(it, "eta_var", k, "", "", c, float(s.eta_var[k, c]))
        for block, beta, sig2 in (("d", s.beta_d, s.sig2_d),
                                  ("m", s.beta_m, s.sig2_m),
                                  ("y", s.beta_y, s.sig2_y)):
            for l in range(beta.shape[0]):
                emit(it, f"sig2_{block}", "", l, "", 0, float(sig2[l]))
                for c in range(beta.shape[1]):
                    emit(it, f"beta_{block}", "", l, "", c, float(beta[l, c]))
        for m in range(s.phi_mean.shape[0]):
            for c in range(s.phi_mean.shape[1]):
                emit(it, "phi_mean", "", "", m, c, float(s.phi_mean[m, c]))
                emit(it, "phi_var", "", "", m, c, float(s.phi_var[m, c]))
    atomic_write(path, "\n".join(lines) + "\n")


def read_posterior_csv(path: str) -> list[PosteriorSample]:
    """Rebuild posterior draws from the long-format file written by
    write_posterior_csv. Per-individual likelihoods are not persisted there,
    so the returned samples carry empty likelihood arrays."""
    rows_by_it: dict[int, list] = {}
    with open(path, encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["iteration", "block", "k", "l", "m", "coord", "value"]:
            raise IngestError(f"{path}: unexpected posterior header")
        for it_s, block, k, l, m, coord, value in reader:
            rows_by_it.setdefault(int(it_s), []).append(
                (block, k, l, m, int(coord), float(value)))

    samples = []
    for it in sorted(rows_by_it):
        cells: dict[str, dict] = {}
        for block, k, l, m, coord, value in rows_by_it[it]:
            cells.setdefault(block, {})[(k, l, m, coord)] = value

        def scalar(block):
            return cells[block][("", "", "", 0)]

        def vec(block, axis):
            d = cells[block]
            n = 1 + max(int(key[axis]) for key in d)
            out = np.empty(n)
            for key, v in d.items():
                out[int(key[axis])] = v
            return out

        def mat(block, axes):
            d = cells[block]
            dims = [1 + max(int(key[a]) for key in d) for a in axes]
            out = np.empty(dims)
            for key, v in d.items():
                out[tuple(int(key[a]) for a in axes)] = v
            return out

        samples.append(PosteriorSample(
            pi=vec("pi", 0), w_theta=mat("w_theta", (0, 1)),
            w_phi=mat("w_phi", (0, 1, 2)),
            alpha_star=scalar("alpha_star"),
            alpha_theta=scalar("alpha_theta"),
            alpha_phi=scalar("alpha_phi"),
            lam=vec("lam", 0), eta_mean=mat("eta_mean", (0, 3)),
            eta_var=mat("eta_var", (0, 3)),
            beta_d=mat("beta_d", (1, 3)), sig2_d=vec("sig2_d", 1),
            beta_m=mat("beta_m", (1, 3)), sig2_m=vec("sig2_m", 1),
            beta_y=mat("beta_y", (1, 3)), sig2_y=vec("sig2_y", 1),
            phi_mean=mat("phi_mean", (2, 3)), phi_var=mat("phi_var", (2, 3)),
            indiv_lik=np.empty(0)))
    return samples


def write_likelihood_csv(path: str, samples: list[PosteriorSample]) -> None:
    """Per-iteration per-individual likelihood matrix, one iteration per row."""
    lines = [",".join(f"obs_{j}" for j in range(samples[0].indiv_lik.shape[0]))]
    for s in samples:
        lines.append(",".join(repr(float(v)) for v in s.indiv_lik))
    atomic_write(path, "\n".join(lines) + "\n")


def read_likelihood_csv(path: str) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        rows = [[float(v) for v in row] for row in reader]
    if not rows:
        raise IngestError(f"{path}: no likelihood rows")
    return np.array(rows)


def write_estimand_csv(path: str, draws: EstimandDraws) -> None:
    lines = ["iteration," + ",".join(ESTIMAND_NAMES)]
    cols = draws.as_dict()
    n = cols["TE"].shape[0]
    for i in range(n):
        lines.append(f"{i}," + ",".join(repr(float(cols[k][i]))
                                        for k in ESTIMAND_NAMES))
    atomic_write(path, "\n".join(lines) + "\n")


def read_estimand_csv(path: str) -> EstimandDraws:
    cols = {name: [] for name in ESTIMAND_NAMES}
    with open(path, encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            for name in ESTIMAND_NAMES:
                cols[name].append(float(row[name]))
    arrays = {name: np.array(cols[name]) for name in ESTIMAND_NAMES}
    return EstimandDraws(arrays["TE"], arrays["NDE"], arrays["NIE"],
                         arrays["SME"], arrays["IME"])


def write_summary_table(path: str, summary: dict) -> None:
    """Table with columns: estimand, Est, 95% CI, PP(>0)."""
    lines = ["estimand,est,ci_lo,ci_hi,pp_positive"]
    for name in ESTIMAND_NAMES:
        if name not in summary:
            continue
        s = summary[name]
        lines.append(f"{name},{s['mean']:.6f},{s['lo']:.6f},"
                     f"{s['hi']:.6f},{s['pp_positive']:.4f}")
    atomic_write(path, "\n".join(lines) + "\n")


def write_sensitivity_table(path: str, base_summary: dict,
                            copula_summary: dict) -> None:
    lines = ["estimand,mode,est,ci_lo,ci_hi,pp_positive"]
    for name in ESTIMAND_NAMES:
        for mode, summary in (("rho_zero", base_summary),
                              ("rho_prior", copula_summary)):
            s = summary[name]
            lines.append(f"{name},{mode},{s['mean']:.6f},{s['lo']:.6f},"
                         f"{s['hi']:.6f},{s['pp_positive']:.4f}")
    atomic_write(path, "\n".join(lines) + "\n")


def write_eval_report(path: str, report: dict) -> None:
    lines = ["estimand,bias,rmse,avg_length,coverage"]
    for name, row in report.items():
        lines.append(f"{name},{row['bias']:.6f},{row['rmse']:.6f},"
                     f"{row['avg_length']:.6f},{row['coverage']:.4f}")
    atomic_write(path, "\n".join(lines) + "\n")


def write_manifest(path: str, command: str, config: dict, seed: int,
                   input_path: str | None, elapsed: float) -> None:
    entries = {"command": command, "seed": str(seed),
               "elapsed_seconds": f"{elapsed:.3f}"}
    if input_path is not None:
        entries["input"] = input_path
        entries["input_sha256"] = content_hash(input_path)
    for k, v in config.items():
        entries[f"config.{k}"] = str(v)
    atomic_write(path, format_config(entries))
