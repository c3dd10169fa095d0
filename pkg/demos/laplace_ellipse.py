"""Interior Laplace problem on an ellipse, solved with the compressed
double-layer matrix.

The boundary data are the field of a point charge outside the curve, so
the exact interior solution is known and the solve can be checked at a few
points inside.
"""

import numpy as np

from hbsls import KernelSpec, SolverConfig, compress, ellipse, solve_overdetermined
from hbsls.geometry import PointSet
from hbsls.kernels import dense_matrix

N = 2048
pts = ellipse(N)
kern = KernelSpec.parse("laplace2d_double_layer")

src = np.array([3.0, 2.0])
u = lambda x: -np.log(np.linalg.norm(x - src, axis=-1)) / (2 * np.pi)
b = u(pts.coords)

cfg = SolverConfig(eps=1e-9)
cm = compress(kern, pts, pts, cfg.compression())
print("compressed %d x %d in %.2f s, depth %d, root skeletons %d x %d"
      % (cm.shape + (cm.timings["compress"], cm.depth, cm.K_r, cm.K_c)))
for level, p, k in cm.level_stats():
    print("  level %d: %3d blocks, mean rank %.1f" % (level, p, k))

rep = solve_overdetermined(kern, pts, pts, b, cfg, cm=cm)
print("solve: %d correction(s), residual %.1e, T_qr %.2f s, T_sv %.3f s"
      % (rep.n_iter, rep.residual, rep.T_qr, rep.T_sv))

# The density sigma represents u inside the curve through the double layer.
inside = np.array([[0.3, 0.2], [-1.2, 0.1], [0.0, -0.6]])
probe = dense_matrix(kern, PointSet(inside), pts)
print("\n  point            computed       exact")
for x, v in zip(inside, probe @ rep.x):
    print("  (%5.2f, %5.2f)  %12.9f  %12.9f" % (x[0], x[1], v, u(x)))
