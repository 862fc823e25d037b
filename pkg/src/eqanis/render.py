"""PNG output: complex system-matrix rows, concentration images and error-map heatmaps."""
from __future__ import annotations

import numpy as np
from PIL import Image

CONTOUR_LEVELS = (0.001, 0.005, 0.01, 0.05)


def _on_grid(values, shape):
    values = np.asarray(values)
    if values.size != shape[0] * shape[1]:
        raise ValueError(f"{values.size} values do not fit grid shape {shape}")
    return values.reshape(shape)[::-1]  # image row 0 is the top (largest y)


def complex_to_hsv(row, shape):
    """HSV bytes ``(ny, nx, 3)``: hue = phase, saturation full, value = |row| / max |row|."""
    z = _on_grid(np.asarray(row, dtype=complex), shape)
    mag = np.abs(z)
    peak = mag.max()
    val = mag / peak if peak > 0 else np.zeros_like(mag)
    hue = np.mod(np.angle(z), 2 * np.pi) / (2 * np.pi)
    hsv = np.empty(z.shape + (3,), np.uint8)
    hsv[..., 0] = np.round(hue * 256).astype(int) % 256
    hsv[..., 1] = 255
    hsv[..., 2] = np.round(val * 255).astype(np.uint8)
    return hsv


def _save(img: Image.Image, path, scale):
    if scale > 1:
        img = img.resize((img.width * scale, img.height * scale), Image.NEAREST)
    img.save(path, format="PNG", optimize=False)


def render_complex_map(row, shape, path, scale=8):
    """Write a complex-colormap PNG of one system-matrix row on a ``(ny, nx)`` grid."""
    hsv = complex_to_hsv(row, shape)
    _save(Image.fromarray(hsv, mode="HSV").convert("RGB"), path, scale)


def render_gray(values, shape, path, scale=8, vmax=None):
    v = _on_grid(np.asarray(values, dtype=float), shape)
    top = np.max(v) if vmax is None else vmax
    g = np.clip(v / top, 0, 1) if top > 0 else np.zeros_like(v)
    _save(Image.fromarray(np.round(g * 255).astype(np.uint8), mode="L"), path, scale)


def render_heatmap(values, x_values, y_values, path, xlabel="K [J/m^3]", ylabel="D [nm]",
                   levels=CONTOUR_LEVELS, title=None):
    """Heatmap of ``values[i, j]`` (rows ``y_values``, columns ``x_values``) with labelled contours."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    values = np.asarray(values, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 4), dpi=100)
    with np.errstate(divide="ignore", invalid="ignore"):
        img = np.log10(values)
    mesh = ax.pcolormesh(x_values, y_values, img, shading="nearest", cmap="viridis")
    fig.colorbar(mesh, ax=ax, label="log10 error")
    finite = values[np.isfinite(values)]
    lv = [l for l in levels if finite.size and finite.min() < l < finite.max()]
    if lv and len(x_values) > 1 and len(y_values) > 1:
        cs = ax.contour(x_values, y_values, values, levels=lv, colors="w", linewidths=1)
        ax.clabel(cs, fmt="%g", fontsize=7)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)
