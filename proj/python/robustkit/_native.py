# SPDX-License-Identifier: Apache-2.0
try:
    from ._robustkit import *  # noqa: F401,F403
    from ._robustkit import __version__  # noqa: F401
except ImportError:
    from _robustkit import *  # noqa: F401,F403
    from _robustkit import __version__  # noqa: F401
