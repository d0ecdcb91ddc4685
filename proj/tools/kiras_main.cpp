#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "kiras/trainer.hpp"

namespace {

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw kiras::IoError("cannot open output file: " + path);
  out << content;
  if (!out) throw kiras::IoError("write failed: " + path);
}

int run(int argc, char** argv) {
  CLI::App app{"keyframe-guided skill training for a planar quadruped"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "run the two-stage training loop");
  std::string train_config;
  std::string resume;
  train->add_option("--config", train_config, "config file")->required();
  train->add_option("--resume", resume, "checkpoint to continue from");

  auto* eval = app.add_subcommand("eval", "deterministic rollouts with per-skill metrics");
  std::string eval_ckpt, eval_skill, eval_terrain = "flat";
  int eval_level = 0, eval_episodes = 10;
  eval->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--skill", eval_skill, "skill name")->required();
  eval->add_option("--terrain", eval_terrain, "terrain type");
  eval->add_option("--level", eval_level, "difficulty level 0-9");
  eval->add_option("--episodes", eval_episodes, "episode count");

  auto* replay = app.add_subcommand("replay", "scripted skill switching, one continuous episode");
  std::string replay_ckpt, replay_script, replay_out;
  replay->add_option("--ckpt", replay_ckpt, "checkpoint file")->required();
  replay->add_option("--script", replay_script, "script of (time, skill, target_vx) lines")
      ->required();
  replay->add_option("--out", replay_out, "output csv")->required();

  auto* add = app.add_subcommand("add-skill", "widen a checkpoint with one new keyframe skill");
  std::string add_ckpt, add_keyframe, add_out;
  std::int64_t add_t1 = -1, add_t2 = -1;
  add->add_option("--ckpt", add_ckpt, "checkpoint file")->required();
  add->add_option("--keyframe", add_keyframe, "keyframe file defining exactly one skill")
      ->required();
  add->add_option("--out", add_out, "output checkpoint")->required();
  add->add_option("--t1", add_t1, "stage-1 length for the relearning run (default: previous t1)");
  add->add_option("--t2", add_t2, "total length for the relearning run (default: previous t2)");

  auto* terrain = app.add_subcommand("export-terrain", "dump a terrain height profile as csv");
  std::string terrain_type = "flat", terrain_out;
  int terrain_level = 0;
  std::uint64_t terrain_seed = 0;
  terrain->add_option("--type", terrain_type, "terrain type")->required();
  terrain->add_option("--level", terrain_level, "difficulty level 0-9")->required();
  terrain->add_option("--out", terrain_out, "output csv")->required();
  terrain->add_option("--seed", terrain_seed, "generation seed");

  CLI11_PARSE(app, argc, argv);

  if (train->parsed()) {
    const kiras::TrainConfig cfg = kiras::load_config(train_config);
    if (resume.empty()) {
      kiras::Trainer t(cfg);
      t.train_loop();
    } else {
      kiras::Trainer t = kiras::Trainer::load(resume);
      t.set_out_dir(cfg.out_dir);
      t.train_loop();
    }
    return 0;
  }
  if (eval->parsed()) {
    const kiras::Trainer t = kiras::Trainer::load(eval_ckpt);
    const int skill = t.skill_set().index_of(eval_skill);
    const kiras::TerrainType type = kiras::terrain_type_from_string(eval_terrain);
    const kiras::EvalReport r = t.evaluate(skill, type, eval_level, eval_episodes);
    std::cout << "skill=" << eval_skill << " episodes=" << r.episodes
              << " mean_base_height=" << r.mean_base_height
              << " mean_pitch_deg=" << r.mean_pitch_deg << " dtw=" << r.dtw
              << " cosine=" << r.cosine << " success_rate=" << r.success_rate << "\n";
    return 0;
  }
  if (replay->parsed()) {
    const kiras::Trainer t = kiras::Trainer::load(replay_ckpt);
    write_file(replay_out, t.replay(kiras::load_replay_script(replay_script)));
    return 0;
  }
  if (add->parsed()) {
    kiras::Trainer t = kiras::Trainer::load(add_ckpt);
    const kiras::SkillSet extra = kiras::load_keyframes(add_keyframe);
    if (extra.count() != 1)
      throw kiras::InvalidArgument("keyframe file must define exactly one skill");
    const std::int64_t t1 = add_t1 > 0 ? add_t1 : t.config().t1;
    const std::int64_t t2 = add_t2 > 0 ? add_t2 : t.config().t2;
    t.add_skill(extra.keyframes.front(), extra.names.front(), t1, t2);
    t.save(add_out);
    return 0;
  }
  if (terrain->parsed()) {
    const kiras::TerrainType type = kiras::terrain_type_from_string(terrain_type);
    write_file(terrain_out,
               kiras::terrain_to_csv(kiras::generate_terrain(type, terrain_level, terrain_seed)));
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const kiras::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const kiras::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const kiras::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const kiras::NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
