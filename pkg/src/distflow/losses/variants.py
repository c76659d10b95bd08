#  ********************************************************************************
#
#       ___     __  ______
#   ___/ (_)__ / /_/ _/ /__ _    __
#  / _  / (_-</ __/ _/ / _ \ |/|/ /     Distance-Aware Training
#  \_,_/_/___/\__/_//_/\___/__,__/      for Autoregressive Models
#
#  Copyright (c) 2021-2022 FarSimple Oy.
#
#  The MIT License (MIT)
#
#  Permission is hereby granted, free of charge, to any person obtaining a copy of this software
#  and associated documentation files (the "Software"), to deal in the Software without restriction,
#  including without limitation the rights to use, copy, modify, merge, publish, distribute, sublicense,
#  and/or sell copies of the Software, and to permit persons to whom the Software is furnished to do so,
#  subject to the following conditions:
#
#  The above copyright notice and this permission notice shall be included
#  in all copies or substantial portions of the Software.
#
#  THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR IMPLIED,
#  INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
#  FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT.
#  IN NO EVENT SHALL THE AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER LIABILITY,
#  WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM, OUT OF OR IN CONNECTION WITH
#  THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE SOFTWARE.
#  ********************************************************************************

from distflow.common.helpers import FromStringEnum


class LossVariant(FromStringEnum):
    """Training objective selector enum."""

    SFT = 0
    VOCAB = 1
    DIST = 2
    DIST_NO_PLACE = 3
    DIST_NO_CONTRASTIVE = 4
    LABEL_SMOOTH = 5

    @property
    def uses_distance_loss(self) -> bool:
        return self in (
            LossVariant.DIST,
            LossVariant.DIST_NO_PLACE,
            LossVariant.DIST_NO_CONTRASTIVE,
            LossVariant.LABEL_SMOOTH,
        )

    @property
    def uses_place_weights(self) -> bool:
        return self in (LossVariant.DIST, LossVariant.DIST_NO_CONTRASTIVE, LossVariant.LABEL_SMOOTH)

    @property
    def uses_contrastive(self) -> bool:
        return self in (LossVariant.DIST, LossVariant.DIST_NO_PLACE, LossVariant.LABEL_SMOOTH)


class KLRestriction(FromStringEnum):
    """How the model likelihood is restricted to the vocabulary subset inside the distance loss."""

    LITERAL = 0
    RENORMALIZED = 1


class Reduction(FromStringEnum):
    """Reduction over positions."""

    MEAN = 0
    SUM = 1
