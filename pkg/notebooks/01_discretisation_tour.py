# %% [markdown]
# # A tour of the discretisation
#
# This walks through the building blocks on a small mesh: the two-material
# unit square, the local HDG blocks, static condensation and one
# Crank-Nicolson step. Everything runs in a few seconds.

# %%
from dataclasses import replace

import numpy as np

from hdgfsi import benchmarks
from hdgfsi.assembly import DofMap, assemble_local
from hdgfsi.timestepping import CrankNicolson, EnergyReport, State

# %% [markdown]
# ## Mesh
#
# The manufactured benchmark lives on (0, 1) x (-1, 0.5): fluid below the
# interface y = 0, solid above. ``make_mesh`` returns a structured
# triangulation whose lines contain the interface.

# %%
pb = benchmarks.example1("L1")
mesh = pb.make_mesh(1 / 4)
print(mesh.n_elements, "elements,", int(mesh.solid.sum()), "in the solid")
print("labels:", sorted(mesh.labels))

# %% [markdown]
# ## Degrees of freedom
#
# Stress uses P_k per component (three symmetric components), velocity and
# the facet trace use P_{k+1}. After condensation only the trace unknowns on
# interior facets remain in the global system.

# %%
for k in range(4):
    dm = DofMap(mesh, k, pb.bcs)
    print(f"k={k}: local block {dm.n_local:3d}, interior {dm.n_interior:3d}, global trace system {dm.n_free}")

# %%
blocks = assemble_local(mesh, 1, pb.materials, DofMap(mesh, 1, pb.bcs))
m = blocks.mass_sigma[0]
print("stress mass of element 0: symmetric", np.allclose(m, m.T), "| smallest eigenvalue", np.linalg.eigvalsh(m)[0])

# %% [markdown]
# ## Energy
#
# Without sources and with homogeneous data the discrete energy can only
# decrease, and the decrease per step equals the recorded dissipation.

# %%
unforced = replace(pb, source=None, interface_jump=None)
cn = CrankNicolson(unforced, mesh, 1, 0.01)
z = cn.zero_state()
rng = np.random.default_rng(0)
st = State(0, 0.0, rng.standard_normal(z.sigma.shape), rng.standard_normal(z.u.shape), z.trace, z.d)
rep = EnergyReport()
cn.run(st, 20, [rep])
print("E first/last:", rep.energy[0], rep.energy[-1])
print("relative balance:", rep.relative_balance())

# %% [markdown]
# ## Exactness
#
# A solution that is polynomial in space (degree k+1 velocity, degree k
# stress) and quadratic in time is reproduced up to rounding.

# %%
from hdgfsi.verify import exactness_errors

for k in range(3):
    rec = exactness_errors(k, 1 / 2)
    print(f"k={k}: e_sigma={rec.e_sigma:.2e}  e_u={rec.e_u:.2e}")
