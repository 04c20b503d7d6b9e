"""Architecture hyperparameters of the reference models, kept as named constants.

Only shapes and counts are recorded; learned weights are out of scope.  The
desk-scale defaults used by the harness live in :mod:`cylsplat.harness.config`.
"""

from types import MappingProxyType

NUSCENES = MappingProxyType({
    "feat_dim": 768,
    "plane_hw": (56, 512),
    "uccm": (0.9, 0.98, 0.98, 0.0, 0.4, 0.4),  # rho_o, rho_v, rho_p, dh_o, dh_v, dh_p
    "K": 48,
    "D_occ": 8,
    "D_geo": 12,
    "D_app": 36,
    "geo_out": 144,
    "app_out": 432,
    "occ_out": 384,
    "k_i": 4,
    "k_o": 1,
    "D_pix": 128,
    "target_hw": (224, 400),
    "pixel_decoder_out": 14,
    "volume_decoder_out": 42,
    "G_p": 1,
    "G_v": 3,
    "occ_decoder_out": 4,
    "bev_decoder_out": 2,
})

CARLA = MappingProxyType({
    "feat_dim": 768,
    "plane_hw": (56, 512),
    "uccm": (0.9, 1.6, 1.6, 0.0, 0.0, 0.0),
    "K": 48,
    "D_occ": 8,
    "D_geo": 12,
    "D_app": 36,
    "k_i": 2,
    "k_o": 2,
    "D_pix": 24,
    "target_hw": (150, 200),
    "pixel_decoder_out": 14,
    "tex_decoder_out": 33,
    "geo_decoder_out": 9,
    "G_p": 1,
    "G_v": 3,
})

OCC_VOXEL_SIZE = 0.4
OCC_DIMS = (40, 200, 200)  # L, H, W
OCC_RANGE = (-40.0, -40.0, -3.0, 40.0, 40.0, 13.0)

OCC_LOSS_WEIGHTS = (0.02, 0.02, 0.1, 0.1)          # sem, geo, ce, bev
RECON_LOSS_WEIGHTS = (1.0, 0.05, 0.5, 0.01, 0.01)  # image, lpips, sky, depth, pearson
