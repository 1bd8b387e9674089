"""Distances between random points: closed forms against simulation.

Two independent uniform points in the unit ball (or on the unit sphere) have a
distance whose density is known in closed form.  We compare it with a
histogram of simulated pairs and print the moment integral that later enters
the variance formulas.
"""

import numpy as np

from lrdsojourn.geomprob import (BodySpec, ball_distance_density, ball_moment_integral, pair_distances,
                                 sphere_chord_density, uniform_sphere_points)

rng = np.random.default_rng(1)
edges = np.linspace(0, 2, 11)
mid = 0.5 * (edges[1:] + edges[:-1])

for d in (2, 3, 4):
    r = pair_distances(BodySpec.unit_ball(d), 400_000, rng)
    hist, _ = np.histogram(r, edges, density=True)
    print(f"ball d={d}: max |hist - density| over 10 bins = "
          f"{np.max(np.abs(hist - ball_distance_density(d, 1.0, mid))):.3f}")

z = np.linalg.norm(uniform_sphere_points(3, 400_000, rng) - uniform_sphere_points(3, 400_000, rng), axis=1)
hist, _ = np.histogram(z, edges, density=True)
print("sphere d=3: chord density is z/2;", np.round(hist[:4], 3), "vs", np.round(sphere_chord_density(3, mid[:4]), 3))

for d in (2, 3, 4):
    print(f"moment integral d={d}: {ball_moment_integral(d):.10f}")
