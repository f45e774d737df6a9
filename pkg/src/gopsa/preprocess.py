"""Co-spectrum preprocessing of cross-spectral tensors.

Chain applied to each recording: common average reference, real part,
global scale factor, shrinkage.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidInput
from .spd import as_spd, shrink

#: default shrinkage coefficient
RHO = 1e-5
HERMITIAN_TOL = 1e-8


@dataclass
class CrossSpectralTensor:
    """Complex Hermitian cross-spectra of one recording.

    Parameters
    ----------
    data : ndarray, shape (n_freqs, d, d), complex
    freqs : ndarray, shape (n_freqs,)
        Strictly increasing frequencies in Hz.
    """

    data: np.ndarray
    freqs: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.complex128)
        freqs = np.asarray(self.freqs, dtype=np.float64).reshape(-1)
        if data.ndim != 3 or data.shape[1] != data.shape[2]:
            raise InvalidInput(f"cross-spectra must have shape (F, d, d), got {data.shape}")
        if freqs.shape[0] != data.shape[0]:
            raise InvalidInput(f"{freqs.shape[0]} freqs for {data.shape[0]} slices")
        if np.any(np.diff(freqs) <= 0):
            raise InvalidInput("freqs must be strictly increasing")
        if not np.all(np.isfinite(data)):
            raise InvalidInput("cross-spectra have non-finite entries")
        herm = np.conj(np.swapaxes(data, -1, -2))
        err = np.linalg.norm(data - herm, axis=(-2, -1))
        scale = np.maximum(np.linalg.norm(data, axis=(-2, -1)), np.finfo(float).tiny)
        if np.any(err > HERMITIAN_TOL * scale):
            bad = int(np.argmax(err / scale))
            raise InvalidInput(f"slice {bad} is not Hermitian")
        self.data = data
        self.freqs = freqs

    @property
    def channels(self):
        return self.data.shape[-1]


@dataclass
class CospectrumSet:
    """Preprocessed SPD slices of one recording and its global scale factor."""

    slices: np.ndarray
    freqs: np.ndarray
    gsf: float


def car_operator(d):
    """``H = I - 1 1^T / d``."""
    return np.eye(d) - np.full((d, d), 1.0 / d)


def car(S):
    """Common average reference ``H S H^T`` (works on complex input)."""
    S = np.asarray(S)
    H = car_operator(S.shape[-1])
    return H @ S @ H.T


def real_part(S):
    """Real part of Hermitian matrices, symmetrized."""
    R = np.real(np.asarray(S)).astype(np.float64)
    return 0.5 * (R + np.swapaxes(R, -1, -2))


def gsf_correct(slices):
    """Divide every slice by the geometric mean of all diagonal entries.

    Parameters
    ----------
    slices : ndarray, shape (F, d, d)
        Real symmetric PSD slices of one recording.

    Returns
    -------
    corrected : ndarray, shape (F, d, d)
    zeta : float
        ``exp(mean(log(diag)))`` over all slices and channels.
    """
    slices = np.asarray(slices, dtype=np.float64)
    diag = np.diagonal(slices, axis1=-2, axis2=-1)
    if np.any(diag <= 0):
        raise InvalidInput("non-positive diagonal entry before GSF correction")
    zeta = float(np.exp(np.mean(np.log(diag))))
    return slices / zeta, zeta


def preprocess_recording(tensor, rho=RHO, recording=None):
    """CAR, real part, GSF correction and shrinkage, in that order.

    Parameters
    ----------
    tensor : CrossSpectralTensor
    rho : float
        Shrinkage coefficient.
    recording : str, optional
        Identifier included in error messages.

    Returns
    -------
    CospectrumSet
    """
    where = f"recording {recording}: " if recording is not None else ""
    co = real_part(car(tensor.data))
    try:
        co, zeta = gsf_correct(co)
    except InvalidInput as exc:
        raise InvalidInput(f"{where}{exc}") from None
    out = shrink(co, rho)
    for f in range(out.shape[0]):
        try:
            as_spd(out[f])
        except InvalidInput as exc:
            raise type(exc)(f"{where}frequency index {f}: {exc}") from None
    return CospectrumSet(out, tensor.freqs.copy(), zeta)
