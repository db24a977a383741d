"""evospec: frequency-domain solver and stability / initial-value analyzer
for linear evolutionary equations on exponentially weighted L2 spaces.

The engine treats equations of the form

    (d/dt) M(d/dt) u + A u = f

where M is an operator-valued analytic "material law" on a right half-plane
(instantaneous + delay + memory effects) and A a spatial operator.  Solving,
stability certification, and initial-value handling all happen per frequency
on the line Re z = rho after an exponentially weighted Fourier transform.
"""

__version__ = "0.1.0"
