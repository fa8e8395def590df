#!/usr/bin/env python3
"""Corrupt a labelling with lone false positives, then smooth them away.

Stage two treats the label image as a Markov random field on the
8-neighbour grid: a pixel pays a penalty for every neighbour that
disagrees with it, so isolated labels flip while compact regions hold.
This script injects five lone "metastatic" pixels into a fitted stage-1
labelling and prints the label maps before and after smoothing.

Usage:
    python demos/04_smooth_away_isolated_pixels.py
"""

import numpy as np

from nodescan.classify import node_context
from nodescan.config import RunConfig
from nodescan.mixture import run_stage1
from nodescan.model import fit_model
from nodescan.mrf import grid_neighbors, run_stage2
from nodescan.preprocess import preprocess_matrix, preprocess_node, preprocess_training
from nodescan.priors import position_field
from nodescan.synth import SynthConfig, gen_node, gen_nonnodal, gen_training
from nodescan.types import METASTATIC

GLYPH = {1: ".", 2: "M", 3: "~"}   # normal / metastatic / background


def show(y, R, C, title):
    print(title)
    for r in range(R):
        print("   " + "".join(GLYPH[int(v)] for v in y[r * C:(r + 1) * C]))


def isolated(y, nbhd):
    """Metastatic pixels none of whose neighbours are metastatic."""
    return [i for i in range(y.size)
            if y[i] == 2 and np.all(y[nbhd[i]] != 2)]


scfg = SynthConfig(seed=4)
rcfg = RunConfig()
pc = rcfg.preprocess_config()
train = preprocess_training(gen_training(scfg), pc)
nonnodal = preprocess_matrix(gen_nonnodal(scfg), pc)
model = fit_model(train, rcfg.k_ext, rcfg.k_int, nonnodal=nonnodal, preprocess=pc)

node, truth_field = gen_node(scfg, METASTATIC, index=7)
pre = preprocess_node(node, model.preprocess)
red, priors = node_context(pre, model, rcfg)
state1 = run_stage1(red.scores, position_field(pre.R, pre.C, rcfg.rho_s1),
                    priors, rcfg.em_config())

# plant five lone false positives on normal pixels away from the blob
nbhd = grid_neighbors(pre.R, pre.C)
rng = np.random.default_rng(0)
clean = [i for i in range(state1.y.size)
         if truth_field[i] == 1 and state1.y[i] == 1
         and np.all(state1.y[nbhd[i]] != 2)]
planted = []
for i in rng.permutation(clean):
    if all(i not in nbhd[j] and i != j for j in planted):
        planted.append(int(i))
    if len(planted) == 5:
        break
state1.y[planted] = 2

show(state1.y, pre.R, pre.C,
     f"\nstage-1 labels with {len(planted)} planted lone pixels:")
print(f"   isolated metastatic pixels: {len(isolated(state1.y, nbhd))}")

state2 = run_stage2(red.scores, state1,
                    position_field(pre.R, pre.C, rcfg.rho_s2),
                    priors, rcfg.mrf_config())

show(state2.y, pre.R, pre.C,
     f"\nafter smoothing ({state2.n_iter} sweeps, beta = {rcfg.beta}):")
print(f"   isolated metastatic pixels: {len(isolated(state2.y, nbhd))}")

blob = truth_field == 2
kept = int(np.sum(state2.y[blob] == 2))
print(f"   true blob pixels still metastatic: {kept}/{int(blob.sum())}")
