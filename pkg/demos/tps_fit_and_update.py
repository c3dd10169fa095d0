"""Scattered-data fit with thin plate splines, then fold in new data.

M random samples of a smooth surface are fitted by a regularized least
squares combination of N thin plate splines on a grid. Fifty more samples
arrive afterwards; the update reuses the factorization of the first fit
instead of compressing and factorizing again.
"""

import time

import numpy as np

from hbsls import (KernelSpec, ModificationSpec, PointSet, SolverConfig,
                   build_augmented, dense_matrix, make_geometry,
                   solve_augmented_gmres, solve_overdetermined)
from hbsls.bench import tps_target

M, N = 4096, 1024
kern = KernelSpec("thin_plate_spline")
T, S = make_geometry("tps", (M, N), rng=1)
b = tps_target(T.coords)

cfg = SolverConfig(eps=1e-6, mu=0.1)
rep, ps = solve_overdetermined(kern, T, S, b, cfg, return_prepared=True)
print("fit %d samples with %d splines: residual %.3f, %d correction(s)"
      % (M, N, rep.residual, rep.n_iter))
print("  T_cm %.2f s  T_qr %.2f s  T_sv %.3f s" % (rep.T_cm, rep.T_qr, rep.T_sv))

# new observations
rng = np.random.default_rng(2)
newT = PointSet(rng.random((50, 2)))
bnew = tps_target(newT.coords)
before = dense_matrix(kern, newT, S) @ rep.x - bnew
print("\nresidual on 50 unseen samples before the update: %.3f"
      % (np.linalg.norm(before) / np.linalg.norm(bnew)))

mod = ModificationSpec.from_points(kern, T, S, add_targets=newT, add_values=bnew)
aug = build_augmented(ps, b, mod)
upd = solve_augmented_gmres(aug)
r_new = np.linalg.norm(mod.add_rows @ upd.x - bnew) / np.linalg.norm(bnew)
print("update: %d GMRES iterations, %d A^+ application in setup, %.2f s"
      % (upd.gmres_iterations, upd.setup_applications, upd.time))
print("  residual on the new samples after the update: %.3f" % r_new)

# the same problem from scratch, for comparison
t0 = time.perf_counter()
T2 = PointSet(np.vstack([T.coords, newT.coords]))
fresh = solve_overdetermined(kern, T2, S, np.concatenate([b, bnew]), cfg)
print("from scratch: %.2f s, relative difference %.1e"
      % (time.perf_counter() - t0,
         np.linalg.norm(upd.x - fresh.x) / np.linalg.norm(fresh.x)))

# Each GMRES step of the exact update applies (A^T A)^-1 = A^+ A^+T, so at
# this size it costs about as much as starting over. The left-preconditioned
# variant needs a single A^+ application in total, but only approximates the
# enlarged least-squares solution.
cheap = solve_augmented_gmres(aug, method="rows_left")
print("approximate update: %d iterations, %d A^+ application, %.2f s, "
      "difference %.1e, new-sample residual %.3f"
      % (cheap.gmres_iterations, cheap.pinv_applications, cheap.time,
         np.linalg.norm(cheap.x - fresh.x) / np.linalg.norm(fresh.x),
         np.linalg.norm(mod.add_rows @ cheap.x - bnew) / np.linalg.norm(bnew)))
