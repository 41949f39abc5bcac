"""Log-log slope of the deconvolution kernel peak against 1/lambda, per noise scale.

The slope drifts with sigma/lambda: the asymptotic value beta + 1/2 is only
approached when sigma/lambda is large over the whole bandwidth schedule.
"""
import argparse

import numpy as np

from deconvkm.kernels import deconv_kernel_axis, make_base_kernel
from deconvkm.noise import NoiseModel


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sigma", type=float, nargs="+", default=[0.2, 0.3, 0.5, 0.7, 1.0])
    p.add_argument("--lambdas", type=float, nargs="+", default=[0.4, 0.2, 0.1, 0.05])
    p.add_argument("--kernel", default="flat_top")
    args = p.parse_args()
    lams = np.array(args.lambdas)
    kernel = make_base_kernel(args.kernel)
    for sigma in args.sigma:
        cf = NoiseModel.laplace(sigma, 1).components[0].cf
        peaks = [np.abs(deconv_kernel_axis(kernel, cf, lam, 0.005, 4.0)).max() for lam in lams]
        slope = np.polyfit(np.log(1 / lams), np.log(peaks), 1)[0]
        print(f"sigma={sigma:<5g} slope={slope:.3f}")


if __name__ == "__main__":
    main()
