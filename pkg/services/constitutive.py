import logging
from typing import Tuple

import numpy as np

from models.fields import SymTensorField2
from models.material import (
    SQRT2,
    ConstitutiveTensor4_2D,
    ElasticTensor4_3D,
    ElasticTensorSpec,
    LameParams,
    PairBasisTensor,
)
from utils.errors import BStarViolation, CertificateError, ConfigError, InversionError, ParameterError

logger = logging.getLogger(__name__)

# Pointwise 2x2 determinants at or below this are treated as singular
DET_THRESHOLD = 1e-14


def _delta(a: int, b: int) -> float:
    return 1.0 if a == b else 0.0


def _from_index_function(cls, func) -> PairBasisTensor:
    size = len(cls.pairs)
    matrix = np.zeros((size, size))
    for k, (a, b) in enumerate(cls.pairs):
        for l, (c, d) in enumerate(cls.pairs):
            matrix[k, l] = cls.slot_scale(k, l) * func(a, b, c, d)
    return cls(matrix=matrix)


def build_membrane_tensor(p: LameParams) -> ConstitutiveTensor4_2D:
    """
    H_abcd = h * (4 lambda mu / (lambda + 2 mu) d_ab d_cd + 2 mu (d_ac d_bd + d_ad d_bc))
    """
    if p.lambda_h <= 0 or p.mu_h <= 0 or p.thickness_h <= 0:
        raise ParameterError(
            f"Lame constants and thickness must be positive, got "
            f"lambda={p.lambda_h}, mu={p.mu_h}, h={p.thickness_h}"
        )
    lam, mu, h = p.lambda_h, p.mu_h, p.thickness_h
    reduced = 4.0 * lam * mu / (lam + 2.0 * mu)

    def entry(a, b, c, d):
        return h * (reduced * _delta(a, b) * _delta(c, d)
                    + 2.0 * mu * (_delta(a, c) * _delta(b, d) + _delta(a, d) * _delta(b, c)))

    return _from_index_function(ConstitutiveTensor4_2D, entry)


def build_bending_tensor(H: ConstitutiveTensor4_2D, p: LameParams) -> ConstitutiveTensor4_2D:
    """h_abcd = (h^2 / 3) H_abcd"""
    return ConstitutiveTensor4_2D(matrix=(p.thickness_h ** 2 / 3.0) * H.matrix)


def invert_sym4(T: PairBasisTensor) -> PairBasisTensor:
    """Inverse on the symmetric subspace; plain matrix inverse in the Mandel basis"""
    eigenvalues = np.linalg.eigvalsh(0.5 * (T.matrix + T.matrix.T))
    if eigenvalues.min() <= 0.0 or eigenvalues.min() < 1e-14 * max(1.0, abs(eigenvalues.max())):
        raise InversionError(f"tensor is not positive definite on the symmetric subspace: {eigenvalues}")
    inverse = np.linalg.inv(T.matrix)
    return type(T)(matrix=0.5 * (inverse + inverse.T), is_inverse=not T.is_inverse)


def min_eigenvalue(T: PairBasisTensor) -> float:
    return float(np.linalg.eigvalsh(0.5 * (T.matrix + T.matrix.T)).min())


def to_mandel(t11, t22, t12) -> np.ndarray:
    return np.stack([np.asarray(t11, dtype=float), np.asarray(t22, dtype=float), SQRT2 * np.asarray(t12, dtype=float)])


def from_mandel(vector: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    return vector[0], vector[1], vector[2] / SQRT2


def contract_arrays(T: ConstitutiveTensor4_2D, e11, e22, e12) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """S_ab = T_abcd E_cd on bare component arrays of any shape"""
    vector = to_mandel(e11, e22, e12)
    flat = vector.reshape(3, -1)
    return tuple(component.reshape(np.shape(e11)) for component in from_mandel(T.matrix @ flat))


def quadratic_form(T: ConstitutiveTensor4_2D, e11, e22, e12) -> np.ndarray:
    """Pointwise E:T:E"""
    vector = to_mandel(e11, e22, e12).reshape(3, -1)
    return np.einsum("kn,kl,ln->n", vector, T.matrix, vector).reshape(np.shape(e11))


def contract4(T: ConstitutiveTensor4_2D, E: SymTensorField2) -> SymTensorField2:
    """Pointwise S_ab = T_abcd E_cd"""
    s11, s22, s12 = contract_arrays(T, E.t11, E.t22, E.t12)
    return SymTensorField2(grid=E.grid, t11=s11, t22=s22, t12=s12)


def nk_inverse_arrays(n11: np.ndarray, n22: np.ndarray, n12: np.ndarray, K: float):
    """
    Closed-form inverse of N + K*delta at every node

    Raises BStarViolation at the first node (C order) where N + K*delta is not positive definite.
    """
    a = n11 + K
    d = n22 + K
    b = n12
    det = a * d - b * b
    bad = (det <= DET_THRESHOLD) | (a <= 0.0)
    if np.any(bad):
        flat = np.flatnonzero(np.ravel(bad))[0]
        af, df, bf = np.ravel(a)[flat], np.ravel(d)[flat], np.ravel(b)[flat]
        mean = 0.5 * (af + df)
        radius = np.hypot(0.5 * (af - df), bf)
        logger.debug(f"B* violation at node {flat}")
        raise BStarViolation(flat, [mean - radius, mean + radius], K)
    return d / det, a / det, -b / det


def nk_inverse_field(N: SymTensorField2, K: float) -> SymTensorField2:
    """Pointwise (N + K*delta)^-1"""
    i11, i22, i12 = nk_inverse_arrays(N.t11, N.t22, N.t12, K)
    return SymTensorField2(grid=N.grid, t11=i11, t22=i22, t12=i12)


def nk_margin(n11: np.ndarray, n22: np.ndarray, n12: np.ndarray, K: float) -> float:
    """Smallest eigenvalue of N + K*delta over all nodes"""
    mean = 0.5 * (n11 + n22) + K
    radius = np.hypot(0.5 * (n11 - n22), n12)
    return float(np.min(mean - radius))


# 3D tensors

def build_elastic_tensor(lam: float, mu: float) -> ElasticTensor4_3D:
    """Isotropic H_ijkl = lambda d_ij d_kl + mu (d_ik d_jl + d_il d_jk)"""
    if lam <= 0 or mu <= 0:
        raise ParameterError(f"Lame constants must be positive, got lambda={lam}, mu={mu}")

    def entry(i, j, k, l):
        return lam * _delta(i, j) * _delta(k, l) + mu * (_delta(i, k) * _delta(j, l) + _delta(i, l) * _delta(j, k))

    return _from_index_function(ElasticTensor4_3D, entry)


def elastic_tensor_from_spec(spec: ElasticTensorSpec) -> ElasticTensor4_3D:
    if spec.kind == "isotropic":
        if spec.lambda_ is None or spec.mu is None:
            raise ConfigError("isotropic tensor needs lambda and mu", "elastic_tensor")
        return build_elastic_tensor(spec.lambda_, spec.mu)
    if spec.matrix is None:
        raise ConfigError("matrix tensor needs a 6x6 matrix", "elastic_tensor.matrix")
    matrix = np.asarray(spec.matrix, dtype=float)
    if matrix.shape != (6, 6) or not np.allclose(matrix, matrix.T):
        raise ConfigError("matrix must be a symmetric 6x6 Mandel matrix", "elastic_tensor.matrix")
    return ElasticTensor4_3D(matrix=matrix)


def to_mandel3(t: np.ndarray) -> np.ndarray:
    """Full (..., 3, 3) symmetric tensors to (..., 6) Mandel vectors"""
    return np.stack(
        [t[..., 0, 0], t[..., 1, 1], t[..., 2, 2],
         SQRT2 * t[..., 1, 2], SQRT2 * t[..., 0, 2], SQRT2 * t[..., 0, 1]],
        axis=-1,
    )


def from_mandel3(v: np.ndarray) -> np.ndarray:
    """(..., 6) Mandel vectors to full (..., 3, 3) symmetric tensors"""
    t = np.empty(v.shape[:-1] + (3, 3))
    t[..., 0, 0], t[..., 1, 1], t[..., 2, 2] = v[..., 0], v[..., 1], v[..., 2]
    t[..., 1, 2] = t[..., 2, 1] = v[..., 3] / SQRT2
    t[..., 0, 2] = t[..., 2, 0] = v[..., 4] / SQRT2
    t[..., 0, 1] = t[..., 1, 0] = v[..., 5] / SQRT2
    return t


def check_tensor_hypotheses(H: ElasticTensor4_3D, sample_count: int, seed: int = 0) -> Tuple[float, float]:
    """
    Measure c0 (smallest eigenvalue) and the worst sampled ratio
    H_ijkl t_mi t_mj t_kp t_lp / sum t_ij^4 over random symmetric t
    """
    c0 = min_eigenvalue(H)
    if c0 <= 0.0:
        raise CertificateError(f"tensor hypothesis fails: smallest eigenvalue {c0:.3e} <= 0", {"c0": c0})
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((sample_count, 3, 3))
    t = 0.5 * (raw + np.swapaxes(raw, 1, 2))
    left = to_mandel3(np.einsum("smi,smj->sij", t, t))
    right = to_mandel3(np.einsum("skp,slp->skl", t, t))
    numerator = np.einsum("sa,ab,sb->s", left, H.matrix, right)
    denominator = np.sum(t ** 4, axis=(1, 2))
    c1 = float(np.min(numerator / denominator))
    logger.info(f"Tensor hypotheses: c0={c0:.6g}, worst quartic ratio={c1:.6g} over {sample_count} samples")
    if c1 <= 0.0:
        raise CertificateError(f"tensor hypothesis fails: quartic ratio {c1:.3e} <= 0", {"c1": c1})
    return c0, c1
