#include "dtk/vgg.hpp"

#include <algorithm>
#include <sstream>

namespace dtk {

const char* to_string(VggFamily family) {
  return family == VggFamily::vgg16 ? "vgg16" : "vgg19";
}

VggFamily parse_family(const std::string& text) {
  if (text == "vgg16") return VggFamily::vgg16;
  if (text == "vgg19") return VggFamily::vgg19;
  throw ConfigError("unknown family '" + text + "' (expected vgg16 or vgg19)");
}

std::array<int, 5> convs_per_block(VggFamily family) {
  if (family == VggFamily::vgg16) return {2, 2, 3, 3, 3};
  return {2, 2, 4, 4, 4};
}

std::string conv_layer_name(int block, int conv, int branch) {
  std::string name = "block" + std::to_string(block) + "_conv" + std::to_string(conv);
  if (branch > 0) name += "_br" + std::to_string(branch);
  return name;
}

std::string block_output_name(int block) { return "block" + std::to_string(block) + "_pool"; }

void ArchConfig::validate() const {
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto& plan = blocks[b];
    if (plan.dilations.empty() || plan.dilations.size() > 2) {
      throw ConfigError("block " + std::to_string(b + 1) + " needs one or two dilation rates");
    }
    if (plan.two_branch() && b != 4) {
      throw ConfigError("only block 5 may have two dilation branches");
    }
    for (int r : plan.dilations) {
      if (r < 1) throw ConfigError("block " + std::to_string(b + 1) + " has non-positive dilation");
    }
  }
  if (num_classes < 1) throw ConfigError("num_classes must be positive");
  if (width_divisor < 1) throw ConfigError("width_divisor must be positive");
  if (image_size < 32 || image_size % 32 != 0) {
    throw ConfigError("image_size must be a positive multiple of 32 (five 2x2 pools)");
  }
}

std::vector<std::string> block_conv_layers(const ArchConfig& config, int block) {
  const int convs = convs_per_block(config.family)[static_cast<std::size_t>(block - 1)];
  const auto& plan = config.blocks[static_cast<std::size_t>(block - 1)];
  std::vector<std::string> names;
  const int branches = static_cast<int>(plan.dilations.size());
  for (int br = 0; br < branches; ++br) {
    for (int j = 1; j <= convs; ++j) {
      names.push_back(conv_layer_name(block, j, branches == 2 ? br + 1 : 0));
    }
  }
  return names;
}

template <typename Scalar>
ModelGraph<Scalar> build_vgg(const ArchConfig& config, const InitSource& init) {
  config.validate();
  ModelGraph<Scalar> g({3, config.image_size, config.image_size});
  const auto convs = convs_per_block(config.family);

  std::string prev = ModelGraph<Scalar>::kInputName;
  Index channels = 3;
  for (int b = 1; b <= 5; ++b) {
    const auto& plan = config.blocks[static_cast<std::size_t>(b - 1)];
    const Index filters =
        std::max(1, kBlockFilters[static_cast<std::size_t>(b - 1)] / config.width_divisor);
    const int branches = static_cast<int>(plan.dilations.size());
    std::vector<std::string> outs;
    for (int br = 0; br < branches; ++br) {
      const int tag = branches == 2 ? br + 1 : 0;
      const Index r = plan.dilations[static_cast<std::size_t>(br)];
      std::string cur = prev;
      Index ch = channels;
      for (int j = 1; j <= convs[static_cast<std::size_t>(b - 1)]; ++j) {
        ConvSpec spec;
        spec.in_channels = ch;
        spec.out_channels = filters;
        spec.dilation_h = spec.dilation_w = r;
        spec.with_same_padding();
        const std::string conv = conv_layer_name(b, j, tag);
        g.add_conv(conv, cur, spec, plan.frozen);
        std::string relu = "block" + std::to_string(b) + "_relu" + std::to_string(j);
        if (tag) relu += "_br" + std::to_string(tag);
        g.add_relu(relu, conv);
        cur = relu;
        ch = filters;
      }
      outs.push_back(cur);
    }
    std::string pool_input = outs.front();
    channels = filters;
    if (branches == 2) {
      pool_input = "block" + std::to_string(b) + "_concat";
      g.add_concat(pool_input, outs[0], outs[1]);
      channels = 2 * filters;
    }
    g.add_maxpool(block_output_name(b), pool_input, PoolSpec{2, 2});
    prev = block_output_name(b);
  }

  g.add_flatten("flatten", prev);
  g.add_dense("fc1", "flatten", kHeadUnits[0]);
  g.add_relu("fc1_relu", "fc1");
  g.add_dense("fc2", "fc1_relu", kHeadUnits[1]);
  g.add_relu("fc2_relu", "fc2");
  g.add_dense("fc3", "fc2_relu", config.num_classes);
  g.add_softmax("softmax", "fc3");
  g.validate();

  Rng rng(init.seed);
  g.init_glorot_uniform(rng);
  if (init.pretrained) {
    LoadOptions options;
    options.strict = true;
    options.map_branches = true;
    options.conv_only = true;
    load_into(g, *init.pretrained, options);
  }
  return g;
}

template ModelGraph<float> build_vgg(const ArchConfig&, const InitSource&);
template ModelGraph<double> build_vgg(const ArchConfig&, const InitSource&);

BlockPlan parse_block_plan(const std::string& text) {
  BlockPlan plan;
  plan.dilations.clear();
  std::stringstream ss(text);
  std::string token;
  while (std::getline(ss, token, ',')) {
    token.erase(0, token.find_first_not_of(" \t"));
    token.erase(token.find_last_not_of(" \t") + 1);
    if (token == "freeze") {
      if (plan.frozen) throw ConfigError("block plan '" + text + "' repeats 'freeze'");
      plan.frozen = true;
      continue;
    }
    std::size_t used = 0;
    int rate = 0;
    try {
      rate = std::stoi(token, &used);
    } catch (...) {
      used = 0;
    }
    if (used == 0 || used != token.size() || rate < 1) {
      throw ConfigError("block plan '" + text + "': '" + token +
                        "' is neither 'freeze' nor a positive dilation rate");
    }
    plan.dilations.push_back(rate);
  }
  if (plan.dilations.empty()) plan.dilations.push_back(1);
  if (plan.dilations.size() > 2) throw ConfigError("block plan '" + text + "' has more than two rates");
  return plan;
}

std::string format_block_plan(const BlockPlan& plan) {
  if (plan.frozen && plan.dilations == std::vector<int>{1}) return "freeze";
  std::string out = plan.frozen ? "freeze," : "";
  for (std::size_t i = 0; i < plan.dilations.size(); ++i) {
    out += (i ? "," : "") + std::to_string(plan.dilations[i]);
  }
  return out;
}

std::vector<CatalogEntry> table1_catalog(int num_classes) {
  auto make = [&](VggFamily family, std::array<const char*, 5> plans) {
    ArchConfig c;
    c.family = family;
    c.num_classes = num_classes;
    for (std::size_t b = 0; b < 5; ++b) c.blocks[b] = parse_block_plan(plans[b]);
    return c;
  };
  std::vector<CatalogEntry> rows;
  for (VggFamily family : {VggFamily::vgg16, VggFamily::vgg19}) {
    const std::string label = family == VggFamily::vgg16 ? "VGG-16" : "VGG-19";
    const std::string slug = to_string(family);
    rows.push_back({label + " Basic", slug + "_basic", make(family, {"1", "1", "1", "1", "1"})});
    rows.push_back({label + " freeze/1/2/4/8", slug + "_freeze_1_2_4_8",
                    make(family, {"freeze", "1", "2", "4", "8"})});
    rows.push_back({label + " freeze/freeze/2/4/8", slug + "_freeze_freeze_2_4_8",
                    make(family, {"freeze", "freeze", "2", "4", "8"})});
    if (family == VggFamily::vgg16) {
      rows.push_back({label + " (proposed)", slug + "_proposed",
                      make(family, {"freeze", "freeze", "2", "4", "4,8"})});
    } else {
      rows.push_back({label + " (proposed)", slug + "_proposed",
                      make(family, {"freeze", "freeze", "2", "2", "2,4"})});
    }
  }
  return rows;
}

}  // namespace dtk
