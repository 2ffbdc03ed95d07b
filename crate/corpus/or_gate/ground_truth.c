#include <tfhe/tfhe.h>

void homomorphic_or(LweSample *result, const LweSample *a, const LweSample *b,
                    const TFheGateBootstrappingCloudKeySet *bk) {
    bootsOR(result, a, b, bk);
}
