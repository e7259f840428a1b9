# Generated by Django 5.2.6 on 2026-10-19 09:12

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='SimulationRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('scenario', models.CharField(max_length=120, verbose_name='Сценарий')),
                ('controller', models.CharField(max_length=8, verbose_name='Регулятор')),
                ('capacity', models.FloatField(verbose_name='Ёмкость регулирования')),
                ('seed', models.BigIntegerField(verbose_name='Зерно')),
                ('config_hash', models.CharField(db_index=True, help_text='sha256 файла параметров, сценария и зерна', max_length=64, verbose_name='Хеш конфигурации')),
                ('status', models.CharField(default='ok', max_length=16, verbose_name='Статус')),
                ('error', models.TextField(blank=True, default='', verbose_name='Ошибка')),
                ('e_p', models.FloatField(blank=True, null=True, verbose_name='E_p')),
                ('e_t', models.FloatField(blank=True, null=True, verbose_name='E_t')),
                ('e_e', models.FloatField(blank=True, null=True, verbose_name='E_e')),
                ('e_glb', models.FloatField(blank=True, null=True, verbose_name='E_glb')),
                ('mean_iterations', models.FloatField(blank=True, null=True, verbose_name='Среднее число итераций')),
                ('out_dir', models.CharField(blank=True, default='', max_length=500, verbose_name='Каталог результатов')),
                ('created_at', models.DateTimeField(auto_now_add=True, verbose_name='Создан')),
            ],
            options={
                'verbose_name': 'Прогон',
                'verbose_name_plural': 'Прогоны',
                'ordering': ('-created_at', '-id'),
            },
        ),
    ]
