"""
Hessian-determinant responses
=============================

Box-filter approximations of the second derivatives give a blob response at
each of the five default scales. Local maxima over space and scale become
keypoints.
"""

import numpy as np

from diffsurf import default_scales, detector_response, extract_keypoints, save_image
from diffsurf.synthetic import blob_field

img = blob_field(seed=3, shape=(128, 128))
pyr = detector_response(img)

for spec, det in zip(pyr.scales, pyr.maps):
    print(f"L={spec.filter_size:2d}  step={spec.step}  det range [{det.min():+.4f}, {det.max():+.4f}]")

# keypoints whose largest filter would cross the image edge are dropped
border = max(s.filter_size for s in default_scales()) // 2
kps = extract_keypoints(pyr, threshold=1e-4, border=border)
print(f"{len(kps)} keypoints, strongest: {kps[0]}")

# stretch the first response map into [0, 1] for viewing
det = pyr.maps[0]
save_image((det - det.min()) / np.ptp(det), "det_L9.png")
save_image(img, "input.png")
