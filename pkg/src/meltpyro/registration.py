"""Similarity-transform alignment of the short-wavelength melt-pool image onto
the long-wavelength reference, gated by a structural-similarity score.

The estimator recovers (scale, rotation) by correlating the log-polar
resampled magnitude spectra of Hann-windowed images, then (dx, dy) by
correlating after de-rotating and de-scaling, with one refinement pass.
Correlation on the log-polar plane uses windowed normalized cross-correlation
(circular in angle, linear in log-radius): compact smooth melt pools leave a
unit-normalized cross-power spectrum with no usable peak, so plain phase
correlation cannot see their radial (scale) shift.

Transform convention: a SimilarityTransform maps moving-image coordinates to
reference coordinates about the image center, T(p) = scale * R(rotation) p +
translation, so moving(p) == reference_content(T(p)) for a perfectly
registered pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.fft import fft2, ifft2, irfft2, rfft2
from scipy import ndimage

from .frame_io import SubImage
from .segmentation import SegmentationParams, segment

__all__ = [
    "SimilarityTransform",
    "RegistrationParams",
    "RegistrationResult",
    "TransformEstimationError",
    "upscale_image",
    "downscale_box",
    "estimate_transform",
    "apply_transform",
    "ssim",
    "register",
]


class TransformEstimationError(ValueError):
    """No reliable transform could be estimated for this image pair."""


@dataclass(frozen=True)
class SimilarityTransform:
    """Scale + rotation + translation about the image center.

    rotation is in radians, positive turning the +x axis toward +y;
    translation is (dx, dy) in pixels of the reference grid.
    """

    scale: float = 1.0
    rotation: float = 0.0
    translation: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        if self.scale <= 0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    @property
    def rotation_deg(self) -> float:
        return math.degrees(self.rotation)

    @classmethod
    def identity(cls) -> "SimilarityTransform":
        return cls()

    def apply(self, x, y):
        """Map centered coordinates through the transform."""
        ca = math.cos(self.rotation)
        sa = math.sin(self.rotation)
        dx, dy = self.translation
        return (
            self.scale * (ca * x - sa * y) + dx,
            self.scale * (sa * x + ca * y) + dy,
        )

    def invert(self) -> "SimilarityTransform":
        inv_s = 1.0 / self.scale
        ca = math.cos(-self.rotation)
        sa = math.sin(-self.rotation)
        dx, dy = self.translation
        return SimilarityTransform(
            scale=inv_s,
            rotation=-self.rotation,
            translation=(
                -inv_s * (ca * dx - sa * dy),
                -inv_s * (sa * dx + ca * dy),
            ),
        )

    def compose(self, inner: "SimilarityTransform") -> "SimilarityTransform":
        """Transform equivalent to applying `inner` first, then self."""
        ca = math.cos(self.rotation)
        sa = math.sin(self.rotation)
        ix, iy = inner.translation
        dx, dy = self.translation
        return SimilarityTransform(
            scale=self.scale * inner.scale,
            rotation=self.rotation + inner.rotation,
            translation=(
                self.scale * (ca * ix - sa * iy) + dx,
                self.scale * (sa * ix + ca * iy) + dy,
            ),
        )


@dataclass(frozen=True)
class RegistrationParams:
    upscale_factor: int = 3
    ssim_gate: float = 0.80
    n_theta: int = 720
    n_rho: int = 128
    r_min_frac: float = 6.0 / 512.0
    r_max_frac: float = 0.125
    min_pad: int = 256
    max_scale_samples: int = 24
    max_rotation_deg: float = 15.0
    min_confidence: float = 0.3
    # second scale/rotation pass cancels the cross-coupling bias of the
    # log-polar peak; the translation refinement does the same for (dx, dy)
    sr_passes: int = 2
    # minimum second-moment eccentricity for principal-axis rotation
    # refinement; below it the pool is too round to carry orientation
    min_eccentricity: float = 0.15
    refine: bool = True
    segmentation: SegmentationParams = field(default_factory=SegmentationParams)

    def __post_init__(self) -> None:
        if self.upscale_factor < 1:
            raise ValueError("upscale factor must be >= 1")
        if not 0 <= self.ssim_gate <= 1:
            raise ValueError("ssim gate must be within [0, 1]")


@dataclass(frozen=True)
class RegistrationResult:
    transform: SimilarityTransform | None
    ssim: float
    accepted: bool
    warped: SubImage | None
    failure_reason: str | None = None


def upscale_image(img: SubImage, factor: int) -> SubImage:
    """Bilinear resample onto a factor-times denser pixel grid.

    Output size is factor * input size with pixel-center alignment and edge
    clamping, so a later factor x factor box average is its inverse grid.
    """
    if factor < 1:
        raise ValueError(f"upscale factor must be >= 1, got {factor}")
    if factor == 1:
        return img
    pixels = np.asarray(img.pixels, dtype=np.float64)
    h, w = pixels.shape
    ys = (np.arange(h * factor) + 0.5) / factor - 0.5
    xs = (np.arange(w * factor) + 0.5) / factor - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    out = ndimage.map_coordinates(pixels, [yy, xx], order=1, mode="nearest")
    return SubImage(channel=img.channel, pixels=out, origin=img.origin)


def downscale_box(pixels: np.ndarray, factor: int) -> np.ndarray:
    """Box-average each factor x factor block (mean-preserving downscale)."""
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    if factor == 1:
        return np.asarray(pixels, dtype=np.float64)
    h, w = pixels.shape
    if h % factor or w % factor:
        raise ValueError(f"dimensions {pixels.shape} not divisible by {factor}")
    return (
        np.asarray(pixels, dtype=np.float64)
        .reshape(h // factor, factor, w // factor, factor)
        .mean(axis=(1, 3))
    )


def _hann2d(shape: tuple[int, int]) -> np.ndarray:
    """Circularly symmetric Hann window.

    A separable rectangular Hann has an anisotropic spectral kernel that
    pulls apparent spectrum orientations toward the image axes (visible as a
    rotation bias proportional to the melt pool's own tilt); the radial
    profile is isotropic.
    """
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    r = np.hypot(yy - (h - 1) / 2.0, xx - (w - 1) / 2.0)
    radius = min(h, w) / 2.0
    return np.where(r <= radius, np.cos(np.pi * r / (2.0 * radius)) ** 2, 0.0)


def _pad_size(shape: tuple[int, int], min_pad: int) -> int:
    need = 2 * max(shape)
    return max(min_pad, 1 << (need - 1).bit_length())


def _center_on_mass(pixels: np.ndarray) -> np.ndarray:
    """Roll the image so its intensity centroid sits at the geometric center.

    Magnitude spectra are translation-invariant, so this leaves the
    scale/rotation estimate unchanged in principle; what it removes is the
    Hann window's amplitude ramp across an off-center melt pool, which
    otherwise skews the apparent anisotropy and biases the rotation.
    """
    total = pixels.sum()
    if total <= 0:
        return pixels
    h, w = pixels.shape
    yy, xx = np.mgrid[0:h, 0:w]
    cy = (yy * pixels).sum() / total
    cx = (xx * pixels).sum() / total
    dy = int(round((h - 1) / 2.0 - cy))
    dx = int(round((w - 1) / 2.0 - cx))
    if dy == 0 and dx == 0:
        return pixels
    return np.roll(pixels, (dy, dx), axis=(0, 1))


def _magnitude_spectrum(pixels: np.ndarray, pad: int) -> np.ndarray:
    """Ramp-weighted centered magnitude spectrum of the Hann-windowed image.

    The radial ramp suppresses the DC lobe, which otherwise pins the
    log-polar correlation at zero shift for compact blobs.
    """
    centered = _center_on_mass(pixels)
    windowed = centered * _hann2d(pixels.shape)
    mag = np.fft.fftshift(np.abs(fft2(windowed, s=(pad, pad))))
    c = pad // 2
    yy, xx = np.mgrid[0:pad, 0:pad]
    return mag * np.hypot(yy - c, xx - c)


def _logpolar(mag: np.ndarray, n_theta: int, n_rho: int, r_min: float, r_max: float):
    n = mag.shape[0]
    c = n // 2  # DC bin of the fftshifted spectrum
    thetas = np.linspace(0.0, np.pi, n_theta, endpoint=False)
    base = (r_max / r_min) ** (1.0 / (n_rho - 1))
    rhos = r_min * base ** np.arange(n_rho)
    tt, rr = np.meshgrid(thetas, rhos, indexing="ij")
    samples = ndimage.map_coordinates(
        mag,
        [c + rr * np.sin(tt), c + rr * np.cos(tt)],
        order=1,
        mode="constant",
        cval=0.0,
    )
    return samples, np.pi / n_theta, base


def _ncc_map(a: np.ndarray, b: np.ndarray, max_dr: int):
    """Normalized cross-correlation of b against a for displacements circular
    along axis 0 and within [-max_dr, max_dr] along axis 1.

    Entry [i, j] scores b displaced by (-i circular, -(j - max_dr)) in the raw
    correlation index convention; callers negate indices to get content
    displacement.
    """
    nt, nr = a.shape
    pad_r = nr + 2 * max_dr
    ones = np.ones((nt, nr))

    def corr(x, y):
        return irfft2(rfft2(x, s=(nt, pad_r)) * np.conj(rfft2(y, s=(nt, pad_r))), s=(nt, pad_r))

    s_ab = corr(a, b)
    s_a1 = corr(a, ones)
    s_1b = corr(ones, b)
    s_aa = corr(a * a, ones)
    s_bb = corr(ones, b * b)
    s_11 = corr(ones, ones)

    ii = (np.arange(nt)[:, None]) % nt
    jj = (np.arange(-max_dr, max_dr + 1)[None, :]) % pad_r
    n = s_11[ii, jj]
    cov = s_ab[ii, jj] - s_a1[ii, jj] * s_1b[ii, jj] / n
    va = np.clip(s_aa[ii, jj] - s_a1[ii, jj] ** 2 / n, 0.0, None)
    vb = np.clip(s_bb[ii, jj] - s_1b[ii, jj] ** 2 / n, 0.0, None)
    return cov / (np.sqrt(va * vb) + 1e-300)


def _parafit(vm: float, v0: float, vp: float) -> float:
    denom = vm - 2.0 * v0 + vp
    if denom == 0.0:
        return 0.0
    return float(np.clip(0.5 * (vm - vp) / denom, -0.5, 0.5))


def _orientation_moments(
    pixels: np.ndarray, rel_floor: float = 0.2
) -> tuple[float, float] | None:
    """Principal-axis angle and eccentricity of the intensity distribution.

    Central second moments above a relative intensity floor; returns None for
    an empty weighting. The angle has the usual pi ambiguity of an axis.
    """
    cut = float(pixels.max()) * rel_floor
    weights = np.clip(pixels - cut, 0.0, None)
    total = weights.sum()
    if total <= 0:
        return None
    h, w = pixels.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    cy = (yy * weights).sum() / total
    cx = (xx * weights).sum() / total
    mxx = (((xx - cx) ** 2) * weights).sum() / total
    myy = (((yy - cy) ** 2) * weights).sum() / total
    mxy = ((xx - cx) * (yy - cy) * weights).sum() / total
    angle = 0.5 * math.atan2(2.0 * mxy, mxx - myy)
    trace = mxx + myy
    if trace <= 0:
        return None
    eccentricity = math.hypot(mxx - myy, 2.0 * mxy) / trace
    return angle, eccentricity


def _fold_half_pi(angle: float) -> float:
    while angle > math.pi / 2:
        angle -= math.pi
    while angle < -math.pi / 2:
        angle += math.pi
    return angle


def _translation_cc(reference: np.ndarray, moved: np.ndarray):
    """Translation of `moved` content relative to `reference` via circular
    cross-correlation of mean-removed images, log-parabolic subpixel fit."""
    a = reference - reference.mean()
    b = moved - moved.mean()
    r = ifft2(fft2(a) * np.conj(fft2(b))).real
    h, w = r.shape
    iy, ix = np.unravel_index(int(np.argmax(r)), r.shape)

    def fit(vm, v0, vp):
        if vm > 0 and v0 > 0 and vp > 0:
            return _parafit(math.log(vm), math.log(v0), math.log(vp))
        return _parafit(vm, v0, vp)

    dy = iy + fit(r[(iy - 1) % h, ix], r[iy, ix], r[(iy + 1) % h, ix])
    dx = ix + fit(r[iy, (ix - 1) % w], r[iy, ix], r[iy, (ix + 1) % w])
    if dy > h / 2:
        dy -= h
    if dx > w / 2:
        dx -= w
    norm = float(np.linalg.norm(a) * np.linalg.norm(b))
    confidence = float(r[iy, ix]) / norm if norm > 0 else 0.0
    return dx, dy, confidence


def _warp(pixels: np.ndarray, transform: SimilarityTransform, out_shape: tuple[int, int]) -> np.ndarray:
    """Inverse-map each output pixel through the transform; bilinear sampling,
    out-of-frame samples pseudo-zero."""
    inv = transform.invert()
    oh, ow = out_shape
    yy, xx = np.mgrid[0:oh, 0:ow].astype(np.float64)
    xc = xx - (ow - 1) / 2.0
    yc = yy - (oh - 1) / 2.0
    px, py = inv.apply(xc, yc)
    ih, iw = pixels.shape
    px += (iw - 1) / 2.0
    py += (ih - 1) / 2.0
    return ndimage.map_coordinates(
        np.asarray(pixels, dtype=np.float64), [py, px], order=1, mode="constant", cval=0.0
    )


def estimate_transform(
    moving: SubImage,
    reference: SubImage,
    params: RegistrationParams = RegistrationParams(),
) -> SimilarityTransform:
    """Estimate the similarity transform mapping `moving` onto `reference`.

    Deterministic for fixed inputs. Raises TransformEstimationError when
    either image is structureless or a correlation stage falls below the
    confidence floor.
    """
    mov = np.asarray(moving.pixels, dtype=np.float64)
    ref = np.asarray(reference.pixels, dtype=np.float64)
    if mov.shape != ref.shape:
        raise ValueError(f"image dimensions differ: {mov.shape} vs {ref.shape}")
    if mov.std() < 1e-12 * max(1.0, abs(float(mov.max(initial=0.0)))) or mov.std() == 0.0:
        raise TransformEstimationError("moving image is structureless")
    if ref.std() < 1e-12 * max(1.0, abs(float(ref.max(initial=0.0)))) or ref.std() == 0.0:
        raise TransformEstimationError("reference image is structureless")

    pad = _pad_size(mov.shape, params.min_pad)
    r_min = params.r_min_frac * pad
    r_max = params.r_max_frac * pad
    mag_r = _magnitude_spectrum(ref, pad)
    lp_r, theta_step, base = _logpolar(mag_r, params.n_theta, params.n_rho, r_min, r_max)

    def scale_rotation_step(image: np.ndarray, first_pass: bool) -> tuple[float, float]:
        mag_m = _magnitude_spectrum(image, pad)
        lp_m, _, _ = _logpolar(mag_m, params.n_theta, params.n_rho, r_min, r_max)
        ncc = _ncc_map(lp_r, lp_m, params.max_scale_samples)
        max_dt = int(math.radians(params.max_rotation_deg) / theta_step)
        theta_ok = np.zeros(params.n_theta, dtype=bool)
        theta_ok[: max_dt + 1] = True
        theta_ok[params.n_theta - max_dt :] = True
        windowed = np.where(theta_ok[:, None], ncc, -np.inf)
        iy, ix = np.unravel_index(int(np.argmax(windowed)), ncc.shape)
        confidence = float(ncc[iy, ix])
        if not math.isfinite(confidence) or confidence < params.min_confidence:
            if first_pass:
                raise TransformEstimationError(
                    f"log-polar correlation confidence {confidence:.3f} below "
                    f"{params.min_confidence}"
                )
            return 1.0, 0.0  # keep the previous pass's estimate
        sy = _parafit(
            ncc[(iy - 1) % params.n_theta, ix],
            ncc[iy, ix],
            ncc[(iy + 1) % params.n_theta, ix],
        )
        sx = _parafit(
            ncc[iy, max(ix - 1, 0)], ncc[iy, ix], ncc[iy, min(ix + 1, ncc.shape[1] - 1)]
        )
        dt = iy + sy
        if dt > params.n_theta / 2:
            dt -= params.n_theta
        dr = (ix - params.max_scale_samples) + sx
        rotation = dt * theta_step
        if rotation > math.pi / 2:
            rotation -= math.pi
        elif rotation < -math.pi / 2:
            rotation += math.pi
        return base ** (-dr), rotation

    scale, rotation = scale_rotation_step(mov, first_pass=True)
    for _ in range(max(0, params.sr_passes - 1)):
        corrected = _warp(mov, SimilarityTransform(scale=scale, rotation=rotation), ref.shape)
        ds, dtheta = scale_rotation_step(corrected, first_pass=False)
        scale *= ds
        rotation += dtheta

    # the log-polar stage resolves rotation to roughly half a degree on
    # compact pools; when both images are measurably elongated, the
    # difference of their principal-axis angles (computed symmetrically on
    # the raw images, so resampling smear cancels) is sharper. The spectral
    # value stays as coarse estimate, cross-check, and isotropic fallback.
    om = _orientation_moments(mov)
    oref = _orientation_moments(ref)
    if om is not None and oref is not None:
        angle_m, ecc_m = om
        angle_r, ecc_r = oref
        if min(ecc_m, ecc_r) >= params.min_eccentricity:
            by_moments = _fold_half_pi(angle_r - angle_m)
            if abs(_fold_half_pi(by_moments - rotation)) <= math.radians(3.0):
                rotation = by_moments

    sr_only = SimilarityTransform(scale=scale, rotation=rotation)
    corrected = _warp(mov, sr_only, ref.shape)
    dx, dy, confidence = _translation_cc(ref, corrected)
    if confidence < params.min_confidence:
        raise TransformEstimationError(
            f"translation correlation confidence {confidence:.3f} below "
            f"{params.min_confidence}"
        )

    transform = SimilarityTransform(scale=scale, rotation=rotation, translation=(dx, dy))
    if params.refine:
        aligned = _warp(mov, transform, ref.shape)
        rdx, rdy, rconf = _translation_cc(ref, aligned)
        if rconf >= params.min_confidence:
            transform = replace(transform, translation=(dx + rdx, dy + rdy))
    return transform


def apply_transform(
    img: SubImage,
    transform: SimilarityTransform,
    out_shape: tuple[int, int] | None = None,
) -> SubImage:
    """Resample `img` onto the reference grid defined by `transform`.

    Output pixel q takes the bilinear sample of img at T^-1(q) (coordinates
    centered per grid); samples falling outside img are background
    pseudo-zeros.
    """
    pixels = np.asarray(img.pixels, dtype=np.float64)
    shape = pixels.shape if out_shape is None else out_shape
    return SubImage(channel=img.channel, pixels=_warp(pixels, transform, shape), origin=img.origin)


def ssim(
    a: SubImage | np.ndarray,
    b: SubImage | np.ndarray,
    data_range: float = 65535.0,
    window: int = 11,
    sigma: float = 1.5,
    k1: float = 0.01,
    k2: float = 0.03,
    mask: np.ndarray | None = None,
) -> float:
    """Mean local structural similarity with unit exponents.

    Local statistics from a normalized Gaussian window (11x11, sigma 1.5 by
    default); stabilizers C1=(k1*L)^2, C2=(k2*L)^2 and C3=C2/2, at which the
    luminance*contrast*structure product collapses to
    (2 mu_a mu_b + C1)(2 cov + C2) / ((mu_a^2 + mu_b^2 + C1)(va + vb + C2)).
    With a mask, the score averages the local map over masked pixels only.
    """
    pa = np.asarray(a.pixels if isinstance(a, SubImage) else a, dtype=np.float64)
    pb = np.asarray(b.pixels if isinstance(b, SubImage) else b, dtype=np.float64)
    if pa.shape != pb.shape:
        raise ValueError(f"image dimensions differ: {pa.shape} vs {pb.shape}")
    half = window // 2
    kernel = np.exp(-0.5 * ((np.arange(window) - half) / sigma) ** 2)
    kernel /= kernel.sum()

    def filt(x: np.ndarray) -> np.ndarray:
        out = ndimage.correlate1d(x, kernel, axis=0, mode="reflect")
        return ndimage.correlate1d(out, kernel, axis=1, mode="reflect")

    mu_a = filt(pa)
    mu_b = filt(pb)
    va = filt(pa * pa) - mu_a * mu_a
    vb = filt(pb * pb) - mu_b * mu_b
    cov = filt(pa * pb) - mu_a * mu_b
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    ssim_map = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2)
    )
    if mask is not None:
        if mask.shape != pa.shape:
            raise ValueError("mask dimensions differ from images")
        if not mask.any():
            raise ValueError("empty ssim mask")
        return float(ssim_map[mask].mean())
    return float(ssim_map.mean())


def register(
    moving: SubImage,
    reference: SubImage,
    params: RegistrationParams = RegistrationParams(),
) -> RegistrationResult:
    """Full alignment: upscale both, estimate, warp, downscale, score.

    The SSIM gate is evaluated over the union of the two melt-pool masks
    (background pseudo-zeros would otherwise dominate the score). Estimation
    failures come back as accepted=False with a reason, not exceptions.
    """
    seg_moving = segment(moving, params.segmentation)
    seg_reference = segment(reference, params.segmentation)
    if seg_moving is None or seg_reference is None:
        return RegistrationResult(
            transform=None,
            ssim=0.0,
            accepted=False,
            warped=None,
            failure_reason="no melt pool in one or both sub-images",
        )
    factor = params.upscale_factor
    moving_up = upscale_image(moving, factor)
    reference_up = upscale_image(reference, factor)
    try:
        transform_up = estimate_transform(moving_up, reference_up, params)
    except TransformEstimationError as exc:
        return RegistrationResult(
            transform=None, ssim=0.0, accepted=False, warped=None, failure_reason=str(exc)
        )
    dx, dy = transform_up.translation
    transform = replace(transform_up, translation=(dx / factor, dy / factor))

    warped_up = _warp(
        np.asarray(moving_up.pixels, dtype=np.float64),
        transform_up,
        np.asarray(reference_up.pixels).shape,
    )
    warped_pixels = downscale_box(warped_up, factor)
    warped = SubImage(channel=moving.channel, pixels=warped_pixels, origin=reference.origin)

    # score against the reference passed through the same upscale/downscale
    # chain, so the resampling blur cancels instead of capping the score
    reference_ds = downscale_box(np.asarray(reference_up.pixels, dtype=np.float64), factor)
    seg_warped = segment(warped, params.segmentation)
    mask = seg_reference.mask.copy()
    if seg_warped is not None:
        mask |= seg_warped.mask
    score = ssim(warped_pixels, reference_ds, mask=mask)
    return RegistrationResult(
        transform=transform,
        ssim=score,
        accepted=score >= params.ssim_gate,
        warped=warped,
    )
