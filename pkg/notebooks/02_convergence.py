# %% [markdown]
# # Convergence on the manufactured solution
#
# A reduced space refinement study (three meshes, k = 0 and 1) with the time
# step tied to the mesh as ``dt = 0.1 h^((k+2)/2)``, so the time error does
# not hide the spatial rate. The full sweep is in the acceptance tests and
# takes several minutes; this one takes well under a minute.

# %%
from hdgfsi import benchmarks
from hdgfsi.reporting import markdown, rates, table_rows
from hdgfsi.studies import h_study

pb = benchmarks.example1("L1")
recs = h_study(pb, ks=(0, 1), hs=(1 / 4, 1 / 8, 1 / 16), T=pb.T)

# %%
print(markdown(table_rows(recs, "h")))

# %% [markdown]
# Stress should converge like h^(k+1) and velocity like h^(k+2). The
# coarsest mesh is still pre-asymptotic, which pulls the mean rate down a
# little.

# %%
for k in (0, 1):
    rr = rates([r for r in recs if r.k == k])
    print(f"k={k}: mean stress rate {rr['sigma'][1]:.2f}, mean velocity rate {rr['u'][1]:.2f}")

# %% [markdown]
# ## Time step
#
# At a fixed fine spatial resolution, halving dt quarters the velocity error
# until the spatial error takes over.

# %%
from hdgfsi.studies import dt_study

seq = dt_study(pb, k=4, h=1 / 8, T=pb.T, dts=(pb.T / 5, pb.T / 10, pb.T / 20))
rr = rates(seq, by="dt")
print("velocity errors:", [f"{r.e_u:.2e}" for r in seq])
print("velocity rates:", [f"{x:.2f}" for x in rr["u"][0]])
