"""The variational step and the final contradiction, swept over lambda.

On the deepest split node of the deep instance we smooth the measure, then
minimize F(g) = lam ||g||_inf ||sigma|| + int |T(g sigma)|^2 g dsigma.  The
minimizer b feeds the contradiction chain: the mass captured by the selected
high-density cubes against (lam + l(Q)^alpha)^(1/4) mu(Q).

Small lambda lets b concentrate where T is small, and the ratio exceeds one.
As lambda grows the right-hand side grows with it and the ratio drops below
one.  The max term only forces b flat once lam ||sigma|| is comparable to
the smooth energy at g = 1, which here means lambda in the thousands.
"""

from irrsio.config import preset
from irrsio.experiment import build_instance, contradiction, variational_report, variational_setup

inst = build_instance(preset("two_plateau_deep"))
setup = variational_setup(inst)
print(f"node cube {setup.node.cube.id}, side {setup.node.cube.side_length:.4g}, "
      f"sigma has {len(setup.sigma)} quadrature nodes")
print(f"{'lambda':>8} {'F_init':>10} {'F_final':>10} {'sup b':>8} {'ratio':>8}")
for lam in (1e-3, 1e-1, 10.0, 2000.0):
    _, rep = variational_report(inst, lam, None, 0, setup, balls=5)
    c = contradiction(inst, lam, None, setup)
    print(f"{lam:8.0e} {rep['F_init']:10.4g} {rep['F_final']:10.4g} "
          f"{rep['sup_b']:8.3f} {c.contradiction_ratio:8.3f}")
