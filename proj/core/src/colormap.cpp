#include "xrf/attnviz.h"

namespace xrf {

namespace {

constexpr std::array<std::array<std::uint8_t, 3>, 256> kRamp = {{
    {0, 0, 255}, {1, 1, 254}, {2, 2, 253}, {3, 2, 252},
    {4, 3, 251}, {5, 4, 250}, {6, 5, 249}, {7, 5, 248},
    {8, 6, 247}, {9, 7, 246}, {10, 8, 245}, {11, 8, 244},
    {12, 9, 243}, {13, 10, 242}, {14, 11, 241}, {15, 11, 240},
    {16, 12, 239}, {17, 13, 238}, {18, 14, 237}, {19, 14, 236},
    {20, 15, 235}, {21, 16, 234}, {22, 17, 233}, {23, 17, 232},
    {24, 18, 231}, {25, 19, 230}, {26, 20, 229}, {27, 20, 228},
    {28, 21, 227}, {29, 22, 226}, {30, 23, 225}, {31, 23, 224},
    {32, 24, 223}, {33, 25, 222}, {34, 26, 221}, {35, 26, 220},
    {36, 27, 219}, {37, 28, 218}, {38, 29, 217}, {39, 29, 216},
    {40, 30, 215}, {41, 31, 214}, {42, 32, 213}, {43, 32, 212},
    {44, 33, 211}, {45, 34, 210}, {46, 35, 209}, {47, 35, 208},
    {48, 36, 207}, {49, 37, 206}, {50, 38, 205}, {51, 38, 204},
    {52, 39, 203}, {53, 40, 202}, {54, 41, 201}, {55, 41, 200},
    {56, 42, 199}, {57, 43, 198}, {58, 44, 197}, {59, 44, 196},
    {60, 45, 195}, {61, 46, 194}, {62, 47, 193}, {63, 47, 192},
    {64, 48, 191}, {65, 49, 190}, {66, 50, 189}, {67, 50, 188},
    {68, 51, 187}, {69, 52, 186}, {70, 53, 185}, {71, 53, 184},
    {72, 54, 183}, {73, 55, 182}, {74, 56, 181}, {75, 56, 180},
    {76, 57, 179}, {77, 58, 178}, {78, 59, 177}, {79, 59, 176},
    {80, 60, 175}, {81, 61, 174}, {82, 62, 173}, {83, 62, 172},
    {84, 63, 171}, {85, 64, 170}, {86, 65, 169}, {87, 66, 168},
    {88, 66, 167}, {89, 67, 166}, {90, 68, 165}, {91, 69, 164},
    {92, 69, 163}, {93, 70, 162}, {94, 71, 161}, {95, 72, 160},
    {96, 72, 159}, {97, 73, 158}, {98, 74, 157}, {99, 75, 156},
    {100, 75, 155}, {101, 76, 154}, {102, 77, 153}, {103, 78, 152},
    {104, 78, 151}, {105, 79, 150}, {106, 80, 149}, {107, 81, 148},
    {108, 81, 147}, {109, 82, 146}, {110, 83, 145}, {111, 84, 144},
    {112, 84, 143}, {113, 85, 142}, {114, 86, 141}, {115, 87, 140},
    {116, 87, 139}, {117, 88, 138}, {118, 89, 137}, {119, 90, 136},
    {120, 90, 135}, {121, 91, 134}, {122, 92, 133}, {123, 93, 132},
    {124, 93, 131}, {125, 94, 130}, {126, 95, 129}, {127, 96, 128},
    {128, 96, 127}, {129, 95, 126}, {130, 94, 125}, {131, 93, 124},
    {132, 93, 123}, {133, 92, 122}, {134, 91, 121}, {135, 90, 120},
    {136, 90, 119}, {137, 89, 118}, {138, 88, 117}, {139, 87, 116},
    {140, 87, 115}, {141, 86, 114}, {142, 85, 113}, {143, 84, 112},
    {144, 84, 111}, {145, 83, 110}, {146, 82, 109}, {147, 81, 108},
    {148, 81, 107}, {149, 80, 106}, {150, 79, 105}, {151, 78, 104},
    {152, 78, 103}, {153, 77, 102}, {154, 76, 101}, {155, 75, 100},
    {156, 75, 99}, {157, 74, 98}, {158, 73, 97}, {159, 72, 96},
    {160, 72, 95}, {161, 71, 94}, {162, 70, 93}, {163, 69, 92},
    {164, 69, 91}, {165, 68, 90}, {166, 67, 89}, {167, 66, 88},
    {168, 66, 87}, {169, 65, 86}, {170, 64, 85}, {171, 63, 84},
    {172, 62, 83}, {173, 62, 82}, {174, 61, 81}, {175, 60, 80},
    {176, 59, 79}, {177, 59, 78}, {178, 58, 77}, {179, 57, 76},
    {180, 56, 75}, {181, 56, 74}, {182, 55, 73}, {183, 54, 72},
    {184, 53, 71}, {185, 53, 70}, {186, 52, 69}, {187, 51, 68},
    {188, 50, 67}, {189, 50, 66}, {190, 49, 65}, {191, 48, 64},
    {192, 47, 63}, {193, 47, 62}, {194, 46, 61}, {195, 45, 60},
    {196, 44, 59}, {197, 44, 58}, {198, 43, 57}, {199, 42, 56},
    {200, 41, 55}, {201, 41, 54}, {202, 40, 53}, {203, 39, 52},
    {204, 38, 51}, {205, 38, 50}, {206, 37, 49}, {207, 36, 48},
    {208, 35, 47}, {209, 35, 46}, {210, 34, 45}, {211, 33, 44},
    {212, 32, 43}, {213, 32, 42}, {214, 31, 41}, {215, 30, 40},
    {216, 29, 39}, {217, 29, 38}, {218, 28, 37}, {219, 27, 36},
    {220, 26, 35}, {221, 26, 34}, {222, 25, 33}, {223, 24, 32},
    {224, 23, 31}, {225, 23, 30}, {226, 22, 29}, {227, 21, 28},
    {228, 20, 27}, {229, 20, 26}, {230, 19, 25}, {231, 18, 24},
    {232, 17, 23}, {233, 17, 22}, {234, 16, 21}, {235, 15, 20},
    {236, 14, 19}, {237, 14, 18}, {238, 13, 17}, {239, 12, 16},
    {240, 11, 15}, {241, 11, 14}, {242, 10, 13}, {243, 9, 12},
    {244, 8, 11}, {245, 8, 10}, {246, 7, 9}, {247, 6, 8},
    {248, 5, 7}, {249, 5, 6}, {250, 4, 5}, {251, 3, 4},
    {252, 2, 3}, {253, 2, 2}, {254, 1, 1}, {255, 0, 0},
}};

}  // namespace

std::array<std::uint8_t, 3> heat_color(double value) {
    const double v = value < 0.0 ? 0.0 : (value > 1.0 ? 1.0 : value);
    return kRamp[static_cast<std::size_t>(v * 255.0 + 0.5)];
}

}  // namespace xrf
