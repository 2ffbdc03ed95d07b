#include <tfhe/tfhe.h>

void homomorphic_and(LweSample *result, const LweSample *a, const LweSample *b,
                    const TFheGateBootstrappingCloudKeySet *bk) {
    bootsAND(result, a, b, bk);
}
