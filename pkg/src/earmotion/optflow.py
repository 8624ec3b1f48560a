"""Dense two-frame optical flow via per-pixel quadratic polynomial expansion.

Each frame is locally modelled as f(x) ~ c + b.x + x'Ax by Gaussian-weighted
least squares in a sliding window; displacement between two frames follows
from the coefficient change, estimated coarse-to-fine over an image pyramid
with neighbourhood-aggregated normal equations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Weights for RGB -> luma conversion, fixed for reproducibility.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class FlowParams:
    """Tuning knobs for the pyramidal flow estimator."""

    pyramid_levels: int = 3
    pyramid_scale: float = 0.5
    expansion_window: int = 11
    iterations_per_level: int = 3
    poly_sigma: float = 1.5
    regularization_eps: float = 1e-3

    def __post_init__(self) -> None:
        if self.pyramid_levels < 1:
            raise ValueError("pyramid_levels must be >= 1")
        if not 0.0 < self.pyramid_scale < 1.0:
            raise ValueError("pyramid_scale must be in (0, 1)")
        if self.expansion_window < 3 or self.expansion_window % 2 == 0:
            raise ValueError("expansion_window must be odd and >= 3")
        if self.iterations_per_level < 1:
            raise ValueError("iterations_per_level must be >= 1")
        if not self.poly_sigma > 0:
            raise ValueError("poly_sigma must be > 0")
        if not self.regularization_eps > 0:
            raise ValueError("regularization_eps must be > 0")


@dataclass
class FlowField:
    """Per-pixel displacement (px/frame): u along x (columns), v along y (rows)."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self) -> None:
        if self.u.shape != self.v.shape:
            raise ValueError("u and v must have the same shape")
        if not (np.isfinite(self.u).all() and np.isfinite(self.v).all()):
            raise ValueError("flow field contains non-finite values")

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.u, self.v)


@dataclass
class PolyExpansion:
    """Quadratic fit f(x0+d) ~ c + b.d + d'Ad per pixel.

    ``a_xx``, ``a_xy``, ``a_yy`` are the entries of the symmetric A;
    ``b_x``, ``b_y`` the linear term; ``c`` the constant term.
    """

    a_xx: np.ndarray
    a_xy: np.ndarray
    a_yy: np.ndarray
    b_x: np.ndarray
    b_y: np.ndarray
    c: np.ndarray


def to_grayscale(frame: np.ndarray) -> np.ndarray:
    """RGB frames collapse to luma; grayscale passes through. Returns float64."""
    arr = np.asarray(frame, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[-1] == 3:
        r, g, b = LUMA_WEIGHTS
        return r * arr[..., 0] + g * arr[..., 1] + b * arr[..., 2]
    if arr.ndim == 2:
        return arr
    raise ValueError(f"expected HxW or HxWx3 frame, got shape {arr.shape}")


def _correlate1d(img: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    """Correlation along one axis with reflect padding (no edge repeat)."""
    n = len(kernel) // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (n, n)
    padded = np.pad(img, pad, mode="reflect")
    out = np.zeros(img.shape, dtype=np.float64)
    length = img.shape[axis]
    index: list[slice] = [slice(None), slice(None)]
    for i, w in enumerate(kernel):
        index[axis] = slice(i, i + length)
        out += w * padded[tuple(index)]
    return out


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = max(1, int(round(3.0 * sigma)))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(t**2) / (2.0 * sigma * sigma))
    return k / k.sum()


def _gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    if sigma <= 0:
        return img
    k = _gaussian_kernel(sigma)
    return _correlate1d(_correlate1d(img, k, 1), k, 0)


def _resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel centre alignment and edge clamping."""
    h, w = img.shape
    if (h, w) == (out_h, out_w):
        return img.copy()
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    ys = np.clip(ys, 0, h - 1)
    xs = np.clip(xs, 0, w - 1)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = img[np.ix_(y0, x0)] * (1 - fx) + img[np.ix_(y0, x1)] * fx
    bot = img[np.ix_(y1, x0)] * (1 - fx) + img[np.ix_(y1, x1)] * fx
    return top * (1 - fy) + bot * fy


# Basis monomial powers for [1, x, y, x^2, y^2, xy].
_BASIS_POWERS = ((0, 0), (1, 0), (0, 1), (2, 0), (0, 2), (1, 1))


def polynomial_expansion(frame: np.ndarray, window: int = 11, poly_sigma: float = 1.5) -> PolyExpansion:
    """Fit the local quadratic model at every pixel.

    The fit is a Gaussian-weighted least squares over a ``window`` x ``window``
    neighbourhood; borders are handled by reflection padding.
    """
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be odd and >= 3")
    if not poly_sigma > 0:
        raise ValueError("poly_sigma must be > 0")
    img = to_grayscale(frame)
    if window > min(img.shape):
        raise ValueError(f"window {window} larger than frame {img.shape}")

    n = window // 2
    t = np.arange(-n, n + 1, dtype=np.float64)
    g = np.exp(-(t**2) / (2.0 * poly_sigma**2))
    g /= g.sum()
    kernels = (g, t * g, t * t * g)

    # Weighted moments m[p,q] = sum_window w(x)w(y) x^p y^q f, separably.
    moments = {}
    for p in range(3):
        along_x = _correlate1d(img, kernels[p], axis=1)
        for q in range(3 - p):
            moments[(p, q)] = _correlate1d(along_x, kernels[q], axis=0)

    # Normal matrix G_kl = s[p_k+p_l] * s[q_k+q_l] with s the 1-D weighted
    # power sums; identical at every pixel.
    s = np.array([np.sum(g * t**p) for p in range(5)])
    gram = np.empty((6, 6))
    for k, (pk, qk) in enumerate(_BASIS_POWERS):
        for l, (pl, ql) in enumerate(_BASIS_POWERS):
            gram[k, l] = s[pk + pl] * s[qk + ql]
    gram_inv = np.linalg.inv(gram)

    v = np.stack([moments[pq] for pq in _BASIS_POWERS], axis=-1)
    r = v @ gram_inv.T
    return PolyExpansion(
        a_xx=r[..., 3],
        a_xy=r[..., 5] / 2.0,
        a_yy=r[..., 4],
        b_x=r[..., 1],
        b_y=r[..., 2],
        c=r[..., 0],
    )


def _sample_bilinear(channel: np.ndarray, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    h, w = channel.shape
    x0 = np.floor(px).astype(np.intp)
    y0 = np.floor(py).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = px - x0
    fy = py - y0
    top = channel[y0, x0] * (1 - fx) + channel[y0, x1] * fx
    bot = channel[y1, x0] * (1 - fx) + channel[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def _flow_iteration(
    e0: PolyExpansion,
    e1: PolyExpansion,
    u: np.ndarray,
    v: np.ndarray,
    window: int,
    eps: float,
) -> tuple[np.ndarray, np.ndarray]:
    """One displacement update given expansions of both frames and a prior flow."""
    h, w = u.shape
    ys, xs = np.mgrid[0:h, 0:w]
    px = np.clip(xs + u, 0, w - 1)
    py = np.clip(ys + v, 0, h - 1)

    a_xx1 = _sample_bilinear(e1.a_xx, px, py)
    a_xy1 = _sample_bilinear(e1.a_xy, px, py)
    a_yy1 = _sample_bilinear(e1.a_yy, px, py)
    b_x1 = _sample_bilinear(e1.b_x, px, py)
    b_y1 = _sample_bilinear(e1.b_y, px, py)

    a_xx = 0.5 * (e0.a_xx + a_xx1)
    a_xy = 0.5 * (e0.a_xy + a_xy1)
    a_yy = 0.5 * (e0.a_yy + a_yy1)
    # db = -(b1(x+d0) - b0(x))/2 + A d0: the b-difference re-centred on the
    # prior displacement, so the solve below yields the total displacement.
    db_x = -0.5 * (b_x1 - e0.b_x) + a_xx * u + a_xy * v
    db_y = -0.5 * (b_y1 - e0.b_y) + a_xy * u + a_yy * v

    g11 = a_xx * a_xx + a_xy * a_xy
    g12 = a_xx * a_xy + a_xy * a_yy
    g22 = a_xy * a_xy + a_yy * a_yy
    h1 = a_xx * db_x + a_xy * db_y
    h2 = a_xy * db_x + a_yy * db_y

    box = np.full(window, 1.0 / window)
    smooth = lambda m: _correlate1d(_correlate1d(m, box, 1), box, 0)
    g11, g12, g22, h1, h2 = (smooth(m) for m in (g11, g12, g22, h1, h2))

    # Tikhonov-regularised 2x2 solve; det >= eps^2 keeps textureless
    # regions finite.
    det = (g11 + eps) * (g22 + eps) - g12 * g12
    u_new = ((g22 + eps) * h1 - g12 * h2) / det
    v_new = ((g11 + eps) * h2 - g12 * h1) / det
    return u_new, v_new


def farneback_flow(prev: np.ndarray, next_: np.ndarray, params: FlowParams = FlowParams()) -> FlowField:
    """Coarse-to-fine dense displacement from ``prev`` to ``next_``.

    Accepts grayscale or RGB frames of identical shape; RGB collapses to
    luma first.  The returned field is finite everywhere, including on
    constant frames.
    """
    img0 = to_grayscale(prev)
    img1 = to_grayscale(next_)
    if img0.shape != img1.shape:
        raise ValueError(f"frame shapes differ: {img0.shape} vs {img1.shape}")
    h, w = img0.shape

    levels: list[tuple[int, int, float]] = []
    for k in range(params.pyramid_levels):
        scale = params.pyramid_scale**k
        lh, lw = int(round(h * scale)), int(round(w * scale))
        if k > 0 and min(lh, lw) < params.expansion_window:
            break
        levels.append((lh, lw, scale))

    u = v = None
    prev_shape: tuple[int, int] | None = None
    for lh, lw, scale in reversed(levels):
        if scale == 1.0:
            im0, im1 = img0, img1
        else:
            sigma = (1.0 / scale - 1.0) * 0.5
            im0 = _resize_bilinear(_gaussian_blur(img0, sigma), lh, lw)
            im1 = _resize_bilinear(_gaussian_blur(img1, sigma), lh, lw)
        # Shrink the window on small inputs so expansion stays defined.
        win = min(params.expansion_window, min(lh, lw))
        if win % 2 == 0:
            win -= 1
        win = max(win, 3)
        e0 = polynomial_expansion(im0, win, params.poly_sigma)
        e1 = polynomial_expansion(im1, win, params.poly_sigma)

        if u is None:
            u = np.zeros((lh, lw))
            v = np.zeros((lh, lw))
        else:
            ph, pw = prev_shape
            u = _resize_bilinear(u, lh, lw) * (lw / pw)
            v = _resize_bilinear(v, lh, lw) * (lh / ph)

        for _ in range(params.iterations_per_level):
            u, v = _flow_iteration(e0, e1, u, v, win, params.regularization_eps)
        prev_shape = (lh, lw)

    return FlowField(u=u, v=v)


def mean_flow_magnitude(flow: FlowField, roi: tuple[int, int, int, int] | None = None) -> float:
    """Arithmetic mean of the displacement magnitudes over ``roi`` (x, y, w, h)."""
    mag = flow.magnitude()
    if roi is None:
        return float(mag.mean())
    x, y, w, h = roi
    fh, fw = mag.shape
    if w <= 0 or h <= 0:
        raise ValueError(f"empty roi {roi}")
    if x < 0 or y < 0 or x + w > fw or y + h > fh:
        raise ValueError(f"roi {roi} outside {fw}x{fh} flow field")
    return float(mag[y : y + h, x : x + w].mean())
