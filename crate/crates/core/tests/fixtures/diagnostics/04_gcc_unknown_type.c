#include <tfhe/tfhe.h>

void homomorphic_not(LweSample *result, const LweSample *a,
                     const TFheGateBootstrappingCloudKeySet *bk) {
    TFHEContext *ctx = 0;
    bootsNOT(result, a, bk);
}
