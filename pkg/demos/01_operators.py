"""Tour of the structured linear operators.

Shows the SAME-padding geometry, the conv/deconv adjoint pairing that the
whole model is built on, and dilation. Run: python demos/01_operators.py
"""

import numpy as np

from convngc import ConvGeometry, conv2d, deconv2d, dilate

rng = np.random.default_rng(0)

print("== geometry ==")
geom = ConvGeometry.same(in_h=32, in_w=32, kernel_h=3, kernel_w=3, stride=2)
print(f"32x32 map, 3x3 kernel, stride 2 -> {geom.out_h}x{geom.out_w} output, "
      f"pad (low {geom.pad_low_h}, high {geom.pad_high_h})")

print("\n== strided correlation ==")
x = np.arange(16, dtype=float).reshape(4, 4)
k = np.ones((3, 3))
print("input:\n", x)
print("3x3 ones kernel, stride 2, SAME ->\n", conv2d(x, k, 2))

print("\n== transposed convolution doubles the grid ==")
top = rng.normal(size=(2, 2))
print("2x2 latent map ->", deconv2d(top, rng.normal(size=(3, 3)), 2).shape,
      "image-side map")

print("\n== adjoint identity (the contract) ==")
for stride in (1, 2):
    a = rng.normal(size=(3, 3))
    b = rng.normal(size=(3 * stride, 3 * stride))
    kernel = rng.normal(size=(3, 3))
    lhs = np.sum(deconv2d(a, kernel, stride) * b)
    rhs = np.sum(a * conv2d(b, kernel, stride))
    print(f"stride {stride}:  <deconv(a), b> = {lhs:+.12f}   "
          f"<a, conv(b)> = {rhs:+.12f}   diff = {abs(lhs - rhs):.2e}")

print("\n== dilation ==")
print(dilate(np.array([[1.0, 2.0], [3.0, 4.0]]), 2))
